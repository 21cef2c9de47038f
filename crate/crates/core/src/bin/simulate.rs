//! Command-line driver: runs a configured experiment (or a sweep) and
//! writes plot-ready CSV files plus a manifest.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical-consistency
//! failure (including an oracle mismatch beyond tolerance), 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use cellfree::harness::{parse_sweep, run_experiment, sweep, write_manifest, write_sweep, RunConfig};
use cellfree::Error;
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "simulate", version, about = "Cell-free massive MIMO SE/EE simulator")]
struct Args {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    drops: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo oracle trials on drop 0.
    #[arg(long, value_name = "TRIALS")]
    oracle: Option<usize>,
    /// `axis=v1,v2,...` with axis one of f_D_Ts, N, L, tau_p, asd (inf = uncorrelated).
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any key by dotted path, e.g. `--set scenario.num_aps=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(args: &Args) -> cellfree::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Config { path: o.clone(), message: "expected KEY=VALUE".into() })?;
        config.apply_override(key.trim(), value.trim())?;
    }
    if let Some(d) = args.drops {
        config.apply_override("drops", &d.to_string())?;
    }
    if let Some(s) = args.seed {
        config.apply_override("seed", &s.to_string())?;
    }
    if let Some(t) = args.oracle {
        config.apply_override("trials", &t.to_string())?;
    }
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    Ok(config)
}

fn run(args: &Args) -> cellfree::Result<bool> {
    let config = resolve(args)?;
    if args.print_config {
        print!("{}", config.to_toml_string()?);
        return Ok(true);
    }
    let dir = config.output.dir.clone();
    if let Some(spec) = &args.sweep {
        let (axis, values) = parse_sweep(spec)?;
        let rows = sweep(&config, axis, &values)?;
        let name = write_sweep(&dir, axis, &rows)?;
        write_manifest(&dir, &config, &[name.clone(), "run_manifest.json".into()], None)?;
        println!("wrote {}", dir.join(name).display());
        return Ok(true);
    }
    let result = run_experiment(&config)?;
    let files = result.write(&dir)?;
    for row in &result.summary {
        println!("{:<12} {:<6} {:<8} {:>10.4} ± {:.4}", row.scheme, row.power_mode, row.statistic, row.value, row.stderr);
    }
    if let Some(rows) = &result.oracle {
        let failed = rows.iter().filter(|r| !r.pass).count();
        println!("oracle: {} comparisons, {failed} outside tolerance", rows.len());
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(result.oracle_passed())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => 2,
                Error::Numerical(_) | Error::ModelConsistency(_) => 3,
                _ => 1,
            })
        }
    }
}
