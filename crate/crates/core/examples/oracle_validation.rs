//! Cross-checks every closed-form SINR against the Monte Carlo oracle on a
//! small network and prints the worst relative error per quantity.
//!
//! cargo run --release --example oracle_validation -- [trials]

use cellfree::aging::FrameConfig;
use cellfree::model::{ModelParams, SystemModel};
use cellfree::montecarlo::{
    downlink_oracle, smallcell_oracle, uplink_oracle, OracleInputs, OracleRow, OracleSettings,
    OracleTolerance,
};
use cellfree::uplink::{PowerMode, Scheme};

fn worst(rows: &[OracleRow], prefix: &str) -> Option<(f64, f64, usize)> {
    let sel: Vec<&OracleRow> = rows.iter().filter(|r| r.quantity.starts_with(prefix)).collect();
    if sel.is_empty() {
        return None;
    }
    let max_rel = sel.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    let max_z = sel.iter().map(|r| r.z_score).filter(|z| z.is_finite()).fold(0.0, f64::max);
    Some((max_rel, max_z, sel.iter().filter(|r| !r.pass).count()))
}

fn main() -> cellfree::Result<()> {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let seed = 2024;
    let tol = OracleTolerance::default();
    let mut rows = Vec::new();

    for n_ant in [2, 1] {
        let mut params = ModelParams::reference(10, 4, n_ant)?;
        params.frame = FrameConfig::new(50, 4, 1e-5)?;
        params.f_d_ts = vec![0.002];
        let model = SystemModel::build(&params, seed, 0)?;
        let settings = OracleSettings::at_offsets(model.frame(), &[0, 10, 40], trials, seed, 0);
        let inp = OracleInputs::from(&model);
        let pc = model.uplink_pc(PowerMode::Full);
        let start = std::time::Instant::now();
        if n_ant == 2 {
            for scheme in [Scheme::Lsfd, Scheme::Mf] {
                rows.extend(uplink_oracle(inp, &pc, scheme, &settings)?.report(tol));
            }
            let dpc = model.downlink_pc(PowerMode::Full)?;
            rows.extend(downlink_oracle(inp, &dpc, params.sigma2_dl, &settings)?.report(tol));
        } else {
            rows.extend(smallcell_oracle(inp, &pc, &settings)?.report(tol));
        }
        println!("N = {n_ant}: {:.1?} for {trials} trials", start.elapsed());
    }

    println!("{:<26} {:>10} {:>8} {:>6}", "quantity", "max rel", "max z", "fail");
    for prefix in [
        "lsfd_sinr", "lsfd_ds", "lsfd_bu", "lsfd_ca", "lsfd_ui", "lsfd_pc", "lsfd_ns", "mf_sinr",
        "coherent_sinr", "noncoherent_sinr", "noncoherent_rate", "ap_power", "sc_rate",
        "sc_interference",
    ] {
        if let Some((rel, z, fail)) = worst(&rows, prefix) {
            println!("{prefix:<26} {rel:>10.4} {z:>8.2} {fail:>6}");
        }
    }
    Ok(())
}
