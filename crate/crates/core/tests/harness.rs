//! Experiment driver, result files and the command-line tool.

use std::fs;
use std::path::Path;
use std::process::Command;

use cellfree::harness::{
    bootstrap_stderr, parse_sweep, run_experiment, sweep, write_sweep, RunConfig, Statistic, SweepAxis,
};
use cellfree::uplink::{PowerMode, Scheme};
use cellfree::Error;

fn small_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.seed = 42;
    c.drops = 4;
    c.scenario.num_aps = 12;
    c.scenario.num_ues = 5;
    c.aging.tau_c = 60;
    c.aging.tau_p = 3;
    c.aging.f_d_ts = vec![0.001];
    c.uplink.sc_draws = 40;
    c.uplink.power_modes = vec![PowerMode::Full, PowerMode::Sccpc];
    c.energy.enabled = true;
    c
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn identical_runs_write_identical_files() {
    let config = small_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&config).unwrap();
    let names = ra.write(a.path()).unwrap();
    run_experiment(&config).unwrap().write(b.path()).unwrap();
    let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    assert_eq!(fa.len(), names.len());
    assert_eq!(fa, fb);
    for scheme in ["lsfd", "mf", "sc", "coherent", "noncoherent"] {
        assert!(names.contains(&format!("cdf_{scheme}.csv")));
    }
    // No partial files left behind.
    assert!(fa.iter().all(|(n, _)| !n.ends_with(".partial")));
}

#[test]
fn result_contents() {
    let config = small_config();
    let r = run_experiment(&config).unwrap();
    assert_eq!(r.drops.len(), 4);
    let cdf = r.cdf(Scheme::Lsfd, PowerMode::Sccpc).unwrap();
    assert_eq!(cdf.len(), 4 * 5);
    assert!(cdf.sorted().windows(2).all(|w| w[0] <= w[1]));
    assert!(r.energy.unwrap().ee_total.mean > 0.0);

    let dir = tempfile::tempdir().unwrap();
    r.write(dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("cdf_lsfd.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "axis_value,scheme,power_mode,statistic,value,stderr");
    assert_eq!(lines.count(), 2 * 4 * 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config_sha256"].as_str().unwrap(), config.sha256().unwrap());
    let back: RunConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
    assert_eq!(back, config);
}

#[test]
fn different_seeds_differ() {
    let mut c = small_config();
    c.energy.enabled = false;
    let a = run_experiment(&c).unwrap();
    c.seed = 43;
    let b = run_experiment(&c).unwrap();
    assert_ne!(
        a.cdf(Scheme::Lsfd, PowerMode::Full).unwrap().sorted(),
        b.cdf(Scheme::Lsfd, PowerMode::Full).unwrap().sorted()
    );
}

#[test]
fn oracle_runs_from_config() {
    let mut c = small_config();
    c.drops = 1;
    c.trials = 400;
    c.scenario.antennas_per_ap = 1;
    let r = run_experiment(&c).unwrap();
    let rows = r.oracle.as_ref().unwrap();
    for q in ["lsfd_sinr", "mf_sinr", "coherent_sinr", "noncoherent_sinr", "sc_rate", "ap_power"] {
        assert!(rows.iter().any(|row| row.quantity == q), "{q} missing");
    }
}

#[test]
fn sweeps() {
    let mut c = small_config();
    c.drops = 2;
    c.uplink.schemes = vec![Scheme::Lsfd];
    c.downlink.schemes = vec![Scheme::Coherent];
    c.energy.enabled = false;
    let (axis, values) = parse_sweep("f_D_Ts=0,0.002").unwrap();
    assert_eq!(axis, SweepAxis::FdTs);
    let rows = sweep(&c, axis, &values).unwrap();
    let median = |v: &str| {
        rows.iter()
            .find(|r| r.axis_value == v && r.scheme == "lsfd" && r.power_mode == "full" && r.statistic == "median")
            .unwrap()
            .value
    };
    assert!(median("0.002") < median("0"));
    let dir = tempfile::tempdir().unwrap();
    let name = write_sweep(dir.path(), axis, &rows).unwrap();
    assert!(dir.path().join(name).exists());

    assert!(sweep(&c, SweepAxis::N, &[]).is_err());
    assert!(parse_sweep("speed=1,2").is_err());
    let rows = sweep(&c, SweepAxis::Asd, &[10.0, f64::INFINITY]).unwrap();
    assert!(rows.iter().any(|r| r.axis_value == "inf"));
}

#[test]
fn bootstrap_error_is_sensible() {
    let per_drop: Vec<Vec<f64>> = (0..50).map(|d| (0..10).map(|k| (d * 10 + k) as f64).collect()).collect();
    let se = bootstrap_stderr(&per_drop, Statistic::Median, 200, 1).unwrap();
    assert!(se > 0.0 && se < 100.0);
    assert_eq!(se, bootstrap_stderr(&per_drop, Statistic::Median, 200, 1).unwrap());
    let constant = vec![vec![2.0; 5]; 10];
    assert_eq!(bootstrap_stderr(&constant, Statistic::P05, 50, 1).unwrap(), 0.0);
}

#[test]
fn config_errors_name_the_key() {
    let err = RunConfig::from_toml_str("[scenario]\nnum_aps = 0\n").unwrap_err();
    match err {
        Error::Config { path, .. } => assert_eq!(path, "scenario.num_aps"),
        other => panic!("{other}"),
    }
    assert!(RunConfig::from_toml_str("[scenario]\nnum_apps = 3\n").is_err());
    assert!(RunConfig::from_toml_str("[aging]\nf_d_ts = [0.001, 0.002]\n").is_err());
    let c = RunConfig::from_toml_str("seed = 5\n[uplink]\npower_dBm = 10\n").unwrap();
    assert_eq!(c.seed, 5);
    assert_eq!(c.uplink.power_dbm, 10.0);
}

fn simulate(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_simulate")).args(args).output().unwrap()
}

#[test]
fn cli_runs_and_reports_exit_codes() {
    let out = simulate(&["--print-config", "--set", "scenario.num_aps=7"]);
    assert!(out.status.success());
    let printed = RunConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(printed.scenario.num_aps, 7);

    assert_eq!(simulate(&["--set", "scenario.bogus=1"]).status.code(), Some(2));
    assert_eq!(simulate(&["--config", "/nonexistent/cfg.toml"]).status.code(), Some(2));
    assert_eq!(simulate(&["--set", "drops"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 3\n[scenario]\nnum_aps = 8\nnum_ues = 3\n[aging]\ntau_c = 40\ntau_p = 2\nf_d_ts = [0.002]\n[uplink]\nschemes = [\"lsfd\"]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = simulate(&["--config", cfg.to_str().unwrap(), "--drops", "2", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["cdf_lsfd.csv", "cdf_coherent.csv", "summary.csv", "run_manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }

    let sweep_dir = dir.path().join("sweep");
    let out = simulate(&[
        "--config",
        cfg.to_str().unwrap(),
        "--drops",
        "2",
        "--sweep",
        "L=4,8",
        "--out",
        sweep_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(sweep_dir.join("sweep_L.csv").exists());
}
