//! Per-user SE distributions of every scheme for a static and a mobile
//! network, and the median loss caused by channel aging.
//!
//! cargo run --release --example mobility_cdf -- [drops] [out_dir]

use cellfree::harness::{run_experiment, RunConfig};
use cellfree::uplink::{PowerMode, Scheme};

fn main() -> cellfree::Result<()> {
    let mut args = std::env::args().skip(1);
    let drops: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let out = args.next();

    let mut config = RunConfig::default();
    config.drops = drops;
    config.seed = 7;

    let mut results = Vec::new();
    for f in [0.0, 0.002] {
        config.aging.f_d_ts = vec![f];
        let start = std::time::Instant::now();
        let r = run_experiment(&config)?;
        println!("f_D T_s = {f}: {drops} drops in {:.1?}", start.elapsed());
        if let Some(dir) = &out {
            r.write(&std::path::Path::new(dir).join(format!("fdts_{f}")))?;
        }
        results.push(r);
    }

    println!("{:<12} {:>10} {:>10} {:>8} {:>10} {:>10}", "scheme", "median(0)", "median(f)", "loss", "p05(0)", "p05(f)");
    for scheme in [Scheme::Lsfd, Scheme::Mf, Scheme::Sc, Scheme::Coherent, Scheme::Noncoherent] {
        let a = results[0].cdf(scheme, PowerMode::Full).expect("scheme selected");
        let b = results[1].cdf(scheme, PowerMode::Full).expect("scheme selected");
        println!(
            "{:<12} {:>10.3} {:>10.3} {:>7.1}% {:>10.3} {:>10.3}",
            scheme.name(),
            a.median(),
            b.median(),
            100.0 * (1.0 - b.median() / a.median()),
            a.p05(),
            b.p05()
        );
    }
    for r in &results {
        let c = r.cdf(Scheme::Coherent, PowerMode::Full).expect("selected").p05();
        let nc = r.cdf(Scheme::Noncoherent, PowerMode::Full).expect("selected").p05();
        println!("f_D T_s = {}: coherent / non-coherent 95%-likely SE = {:.2}", r.config.aging.f_d_ts[0], c / nc);
    }
    Ok(())
}
