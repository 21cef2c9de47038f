//! Median and 95%-likely SE against the angular spread, with uncorrelated
//! fading as the limit, for a static and a mobile network.
//!
//! cargo run --release --example spatial_correlation -- [drops]

use cellfree::harness::{sweep, RunConfig, SweepAxis};
use cellfree::uplink::{PowerMode, Scheme};

fn main() -> cellfree::Result<()> {
    let drops: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut config = RunConfig::default();
    config.drops = drops;
    config.seed = 5;
    config.uplink.schemes = vec![Scheme::Lsfd, Scheme::Mf];
    config.downlink.schemes = vec![Scheme::Coherent];
    config.uplink.power_modes = vec![PowerMode::Full];
    config.downlink.power_modes = vec![PowerMode::Full];

    let asd = [5.0, 10.0, 30.0, 60.0, f64::INFINITY];
    for f in [0.0, 0.002] {
        config.aging.f_d_ts = vec![f];
        let rows = sweep(&config, SweepAxis::Asd, &asd)?;
        println!("f_D T_s = {f}");
        println!("{:>6} {:<10} {:>8} {:>8}", "ASD", "scheme", "median", "p05");
        for a in &asd {
            let key = format!("{a}");
            for scheme in ["lsfd", "mf", "coherent"] {
                let get = |stat: &str| {
                    rows.iter()
                        .find(|r| r.axis_value == key && r.scheme == scheme && r.statistic == stat)
                        .map(|r| r.value)
                        .unwrap_or(f64::NAN)
                };
                println!("{key:>6} {scheme:<10} {:>8.3} {:>8.3}", get("median"), get("p05"));
            }
        }
        println!();
    }
    Ok(())
}
