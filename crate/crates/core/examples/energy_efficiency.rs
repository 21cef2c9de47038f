//! Total energy efficiency against the number of APs for two Doppler
//! shifts; prints the curve and the location of its maximum.
//!
//! cargo run --release --example energy_efficiency -- [drops] [K]

use cellfree::harness::{ee_vs_l_sweep, RunConfig};

fn main() -> cellfree::Result<()> {
    let mut args = std::env::args().skip(1);
    let drops: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let l_values: Vec<usize> = (1..=10).map(|i| 10 * i).collect();

    let mut config = RunConfig::default();
    config.drops = drops;
    config.seed = 3;
    config.scenario.num_ues = k;
    config.scenario.asd_deg = 10.0;

    for f in [0.001, 0.002] {
        config.aging.f_d_ts = vec![f];
        let curve = ee_vs_l_sweep(&config, &l_values)?;
        println!("f_D T_s = {f}, K = {k}");
        println!("{:>5} {:>14} {:>10} {:>10}", "L", "EE (Mbit/J)", "P (W)", "SE sum");
        for p in &curve {
            println!(
                "{:>5} {:>8.3} ± {:<5.3} {:>10.2} {:>10.2}",
                p.l,
                p.summary.ee_total.mean / 1e6,
                p.summary.ee_total.stderr / 1e6,
                p.summary.p_total.mean,
                p.summary.se_sum.mean
            );
        }
        let best = curve
            .iter()
            .max_by(|a, b| a.summary.ee_total.mean.total_cmp(&b.summary.ee_total.mean))
            .expect("non-empty curve");
        println!("maximum at L = {}\n", best.l);
    }
    Ok(())
}
