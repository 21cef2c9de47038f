//! One network drop, every scheme: per-UE spectral efficiency with full
//! power and with statistical power control.
//!
//! cargo run --release --example quickstart -- [f_D T_s]

use cellfree::model::{ModelParams, SystemModel};
use cellfree::uplink::{PowerMode, Scheme};

fn main() -> cellfree::Result<()> {
    let f: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.001);

    let mut params = ModelParams::reference(100, 20, 2)?;
    params.f_d_ts = vec![f];
    let model = SystemModel::build(&params, 1, 0)?;
    println!(
        "L = {}, K = {}, N = {}, tau_c = {}, tau_p = {}, f_D T_s = {f}",
        params.dims.l,
        params.dims.k,
        params.dims.n,
        params.frame.tau_c,
        params.frame.tau_p
    );

    let schemes = [Scheme::Lsfd, Scheme::Mf, Scheme::Sc, Scheme::Coherent, Scheme::Noncoherent];
    for mode in [PowerMode::Full, PowerMode::Sccpc] {
        let results = schemes
            .iter()
            .map(|&s| model.evaluate(s, mode))
            .collect::<cellfree::Result<Vec<_>>>()?;
        println!("\n{} power: SE per UE (bit/s/Hz)", mode.name());
        print!("{:>4}", "UE");
        for s in &schemes {
            print!("{:>13}", s.name());
        }
        println!();
        for k in 0..model.k() {
            print!("{k:>4}");
            for r in &results {
                print!("{:>13.3}", r.se[k]);
            }
            println!();
        }
        print!("{:>4}", "sum");
        for r in &results {
            print!("{:>13.2}", r.se.iter().sum::<f64>());
        }
        println!();
    }
    Ok(())
}
