//! Loads a TOML configuration, applies overrides and writes the same result
//! files as the `simulate` binary.
//!
//! cargo run --release --example run_config -- [config.toml] [out_dir] [key=value ...]

use std::path::PathBuf;

use cellfree::harness::RunConfig;

fn main() -> cellfree::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/small.toml")));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("cellfree_run"));

    let mut config = RunConfig::load(&path)?;
    for kv in args {
        if let Some((k, v)) = kv.split_once('=') {
            config.apply_override(k, v)?;
        }
    }
    let result = cellfree::harness::run_experiment(&config)?;
    for row in &result.summary {
        println!("{:<12} {:<6} {:<7} {:>8.4} ± {:.4}", row.scheme, row.power_mode, row.statistic, row.value, row.stderr);
    }
    let files = result.write(&out)?;
    println!("config {}: wrote {} to {}", path.display(), files.join(", "), out.display());
    Ok(())
}
