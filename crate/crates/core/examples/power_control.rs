//! Statistical power control against full power as mobility grows: the
//! 95%-likely SE of each scheme with both policies.
//!
//! cargo run --release --example power_control -- [drops]

use cellfree::harness::{sweep, RunConfig, SweepAxis};
use cellfree::uplink::{PowerMode, Scheme};

fn main() -> cellfree::Result<()> {
    let drops: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let mut config = RunConfig::default();
    config.drops = drops;
    config.seed = 11;
    config.uplink.schemes = vec![Scheme::Lsfd, Scheme::Sc];
    config.uplink.power_modes = vec![PowerMode::Full, PowerMode::Sccpc];
    config.downlink.schemes = vec![Scheme::Coherent];
    config.downlink.power_modes = vec![PowerMode::Full, PowerMode::Sccpc];

    let rows = sweep(&config, SweepAxis::FdTs, &[0.0, 0.001, 0.002])?;
    println!("{:<8} {:<10} {:>10} {:>10} {:>10}", "f_D T_s", "scheme", "p05 full", "p05 sccpc", "gap");
    let pick = |axis: &str, scheme: &str, mode: &str| {
        rows.iter()
            .find(|r| r.axis_value == axis && r.scheme == scheme && r.power_mode == mode && r.statistic == "p05")
            .map(|r| r.value)
            .expect("row present")
    };
    for axis in ["0", "0.001", "0.002"] {
        for scheme in ["lsfd", "sc", "coherent"] {
            let (full, sccpc) = (pick(axis, scheme, "full"), pick(axis, scheme, "sccpc"));
            println!("{axis:<8} {scheme:<10} {full:>10.3} {sccpc:>10.3} {:>10.3}", sccpc - full);
        }
    }
    Ok(())
}
