//! Coherence-block design from UE speed: the normalised Doppler shift, the
//! temporal correlation across a block and the longest block before the
//! correlation first crosses zero.
//!
//! cargo run --release --example block_design -- [carrier_GHz]

use cellfree::aging::{design_tau_c, doppler_from_speed, rho};

fn main() -> cellfree::Result<()> {
    let f_c = std::env::args().nth(1).and_then(|s| s.parse::<f64>().ok()).unwrap_or(2.0) * 1e9;
    let t_s = 1e-5;

    println!("carrier {:.1} GHz, sample time {} us", f_c / 1e9, t_s * 1e6);
    println!("{:>10} {:>10} {:>8} {:>10} {:>10} {:>10}", "km/h", "f_D T_s", "tau_c", "rho[50]", "rho[100]", "rho[200]");
    for kmh in [3.0, 30.0, 60.0, 120.0, 250.0, 350.0] {
        let f = doppler_from_speed(kmh / 3.6, f_c, t_s);
        println!(
            "{kmh:>10} {f:>10.5} {:>8} {:>10.4} {:>10.4} {:>10.4}",
            design_tau_c(f)?,
            rho(f, 50),
            rho(f, 100),
            rho(f, 200)
        );
    }

    // The normalised shifts used throughout the examples.
    for f in [0.001, 0.002, 0.004] {
        println!("f_D T_s = {f}: longest block {} samples", design_tau_c(f)?);
    }
    Ok(())
}
