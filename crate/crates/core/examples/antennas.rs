//! Average uplink SE against the number of antennas per AP, with and
//! without pilot contamination, under uncorrelated fading. Orthogonal
//! pilots need a longer pilot phase (tau_p = K), which costs pre-log.
//!
//! cargo run --release --example antennas -- [drops]

use cellfree::harness::{sweep, RunConfig, SweepAxis};
use cellfree::uplink::{PowerMode, Scheme};

fn main() -> cellfree::Result<()> {
    let drops: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut config = RunConfig::default();
    config.drops = drops;
    config.seed = 9;
    config.scenario.uncorrelated = true;
    config.aging.f_d_ts = vec![0.001];
    config.uplink.schemes = vec![Scheme::Lsfd, Scheme::Mf];
    config.uplink.power_modes = vec![PowerMode::Full];
    config.downlink.schemes.clear();

    let n_values = [1.0, 2.0, 4.0, 8.0, 16.0];
    let mut tables = Vec::new();
    for contamination in [true, false] {
        config.estimation.pilot_contamination = contamination;
        tables.push(sweep(&config, SweepAxis::N, &n_values)?);
    }
    println!("mean uplink SE (bit/s/Hz), tau_p = {} with contamination, tau_p = K without", config.aging.tau_p);
    println!("{:>4} {:>14} {:>14} {:>14} {:>14}", "N", "lsfd", "lsfd (orth)", "mf", "mf (orth)");
    for n in n_values {
        let key = format!("{n}");
        let get = |t: usize, scheme: &str| {
            tables[t]
                .iter()
                .find(|r| r.axis_value == key && r.scheme == scheme && r.statistic == "mean")
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        };
        println!(
            "{key:>4} {:>14.3} {:>14.3} {:>14.3} {:>14.3}",
            get(0, "lsfd"),
            get(1, "lsfd"),
            get(0, "mf"),
            get(1, "mf")
        );
    }
    Ok(())
}
