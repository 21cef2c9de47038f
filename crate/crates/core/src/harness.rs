//! Experiment configuration, drivers and result files.
//!
//! Configuration is TOML. Every physical quantity carries its unit in the
//! key name (`*_dBm`, `*_ms`, `*_MHz`, `*_m`, `*_deg`); conversion to SI
//! happens once, in [`RunConfig::model_params`]. Any key can be overridden
//! from the command line with a dotted path (`scenario.num_aps=50`).

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aging::{design_tau_c, FrameConfig};
use crate::energy::{EnergyResult, PowerModel};
use crate::error::{Error, Result};
use crate::model::{dbm_to_w, ModelParams, SmallCellOrdering, SystemModel};
use crate::montecarlo::{
    downlink_oracle, smallcell_oracle, uplink_oracle, OracleInputs, OracleRow, OracleSettings,
    OracleTolerance,
};
use crate::rng::{stream, Purpose};
use crate::scenario::{AngularSpread, SystemDims};
use crate::uplink::{best_ap, smallcell_se_matrix_n1, PowerMode, Scheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub num_aps: usize,
    pub num_ues: usize,
    pub antennas_per_ap: usize,
    pub area_side_m: f64,
    /// Angular standard deviation of the local scattering model.
    pub asd_deg: f64,
    /// `R_kl = beta_kl I`; overrides `asd_deg`.
    pub uncorrelated: bool,
    pub shadowing: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            num_aps: 100,
            num_ues: 20,
            antennas_per_ap: 2,
            area_side_m: 500.0,
            asd_deg: 30.0,
            uncorrelated: false,
            shadowing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgingSection {
    pub tau_c: usize,
    pub tau_p: usize,
    pub sample_time_ms: f64,
    /// One shared normalised Doppler shift or one per UE.
    pub f_d_ts: Vec<f64>,
    /// Replace `tau_c` by the design rule at the largest Doppler shift.
    pub tau_c_from_doppler: bool,
}

impl Default for AgingSection {
    fn default() -> Self {
        Self {
            tau_c: 200,
            tau_p: 10,
            sample_time_ms: 0.01,
            f_d_ts: vec![0.0],
            tau_c_from_doppler: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationSection {
    #[serde(rename = "pilot_power_dBm")]
    pub pilot_power_dbm: f64,
    /// When false every UE gets its own pilot (`tau_p` is raised to `K`).
    pub pilot_contamination: bool,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self { pilot_power_dbm: 20.0, pilot_contamination: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UplinkSection {
    #[serde(rename = "power_dBm")]
    pub power_dbm: f64,
    /// Noise power at the APs (pilots and uplink data).
    #[serde(rename = "noise_dBm")]
    pub noise_dbm: f64,
    pub schemes: Vec<Scheme>,
    pub power_modes: Vec<PowerMode>,
    pub sc_draws: usize,
    pub sc_candidates: usize,
    pub sc_ordering: SmallCellOrdering,
}

impl Default for UplinkSection {
    fn default() -> Self {
        Self {
            power_dbm: 20.0,
            noise_dbm: -96.0,
            schemes: vec![Scheme::Lsfd, Scheme::Mf, Scheme::Sc],
            power_modes: vec![PowerMode::Full],
            sc_draws: 200,
            sc_candidates: 5,
            sc_ordering: SmallCellOrdering::Reselect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DownlinkSection {
    #[serde(rename = "power_dBm")]
    pub power_dbm: f64,
    /// Noise power at the UEs.
    #[serde(rename = "noise_dBm")]
    pub noise_dbm: f64,
    pub schemes: Vec<Scheme>,
    pub power_modes: Vec<PowerMode>,
}

impl Default for DownlinkSection {
    fn default() -> Self {
        Self {
            power_dbm: 23.0,
            noise_dbm: -96.0,
            schemes: vec![Scheme::Coherent, Scheme::Noncoherent],
            power_modes: vec![PowerMode::Full],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    pub enabled: bool,
    #[serde(rename = "bandwidth_MHz")]
    pub bandwidth_mhz: f64,
    pub power_mode: PowerMode,
    pub model: PowerModel,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self {
            enabled: false,
            bandwidth_mhz: 20.0,
            power_mode: PowerMode::Full,
            model: PowerModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("results") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub drops: usize,
    /// Monte Carlo oracle trials on drop 0; 0 disables the oracle.
    pub trials: usize,
    pub scenario: ScenarioSection,
    pub aging: AgingSection,
    pub estimation: EstimationSection,
    pub uplink: UplinkSection,
    pub downlink: DownlinkSection,
    pub energy: EnergySection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            drops: 200,
            trials: 0,
            scenario: ScenarioSection::default(),
            aging: AgingSection::default(),
            estimation: EstimationSection::default(),
            uplink: UplinkSection::default(),
            downlink: DownlinkSection::default(),
            energy: EnergySection::default(),
            output: OutputSection::default(),
        }
    }
}

fn toml_error_path(e: &toml::de::Error) -> String {
    // The parser reports byte spans, not key paths; the message names the key.
    e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_else(|| "<root>".into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)
            .map_err(|e| Error::config(toml_error_path(&e), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Sets the key at a dotted path to a TOML literal (`50`, `[0.001]`,
    /// `"sccpc"`); bare words are taken as strings.
    pub fn apply_override(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut root = toml::Table::try_from(&*self).map_err(|e| Error::Serialization(e.to_string()))?;
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().expect("split yields at least one part");
        let mut table = &mut root;
        for part in parents {
            table = match table.get_mut(*part) {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(Error::config(key, "no such section")),
            };
        }
        if !table.contains_key(*last) {
            return Err(Error::config(key, "no such key"));
        }
        table.insert(last.to_string(), value);
        let updated: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(key, e.message().to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        for (path, v) in [
            ("scenario.num_aps", s.num_aps),
            ("scenario.num_ues", s.num_ues),
            ("scenario.antennas_per_ap", s.antennas_per_ap),
        ] {
            if v == 0 {
                return Err(Error::config(path, "must be at least 1"));
            }
        }
        if !(s.area_side_m > 0.0) {
            return Err(Error::config("scenario.area_side_m", "must be positive"));
        }
        if !s.uncorrelated && !(s.asd_deg > 0.0) {
            return Err(Error::config("scenario.asd_deg", "must be positive (or set uncorrelated)"));
        }
        let a = &self.aging;
        if a.f_d_ts.is_empty() || (a.f_d_ts.len() != 1 && a.f_d_ts.len() != s.num_ues) {
            return Err(Error::config("aging.f_d_ts", format!("need 1 or {} values", s.num_ues)));
        }
        if a.f_d_ts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::config("aging.f_d_ts", "values must be finite and non-negative"));
        }
        if !(a.sample_time_ms > 0.0) {
            return Err(Error::config("aging.sample_time_ms", "must be positive"));
        }
        self.frame().map_err(|e| Error::config("aging", e.to_string()))?;
        if self.drops == 0 {
            return Err(Error::config("drops", "must be at least 1"));
        }
        if self.uplink.schemes.iter().any(|s| !s.is_uplink()) {
            return Err(Error::config("uplink.schemes", "only lsfd, mf and sc are uplink schemes"));
        }
        if self.downlink.schemes.iter().any(|s| s.is_uplink()) {
            return Err(Error::config("downlink.schemes", "only coherent and noncoherent are downlink schemes"));
        }
        if self.uplink.schemes.is_empty() && self.downlink.schemes.is_empty() && !self.energy.enabled {
            return Err(Error::config("uplink.schemes", "no scheme selected"));
        }
        if !self.uplink.schemes.is_empty() && self.uplink.power_modes.is_empty() {
            return Err(Error::config("uplink.power_modes", "empty"));
        }
        if !self.downlink.schemes.is_empty() && self.downlink.power_modes.is_empty() {
            return Err(Error::config("downlink.power_modes", "empty"));
        }
        if self.uplink.sc_draws == 0 || self.uplink.sc_candidates == 0 {
            return Err(Error::config("uplink.sc_draws", "small-cell draws and candidates must be positive"));
        }
        if !(self.energy.bandwidth_mhz > 0.0) {
            return Err(Error::config("energy.bandwidth_MHz", "must be positive"));
        }
        self.energy.model.validate().map_err(|e| Error::config("energy.model", e.to_string()))?;
        Ok(())
    }

    pub fn frame(&self) -> Result<FrameConfig> {
        let a = &self.aging;
        let tau_p = if self.estimation.pilot_contamination {
            a.tau_p
        } else {
            a.tau_p.max(self.scenario.num_ues)
        };
        let tau_c = if a.tau_c_from_doppler {
            design_tau_c(a.f_d_ts.iter().copied().fold(0.0, f64::max))?
        } else {
            a.tau_c
        };
        FrameConfig::new(tau_c, tau_p, a.sample_time_ms * 1e-3)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let s = &self.scenario;
        Ok(ModelParams {
            dims: SystemDims::new(s.num_aps, s.num_ues, s.antennas_per_ap)?,
            area_side: s.area_side_m,
            spread: if s.uncorrelated {
                AngularSpread::Uncorrelated
            } else {
                AngularSpread::Degrees(s.asd_deg)
            },
            shadowing: s.shadowing,
            frame: self.frame()?,
            f_d_ts: self.aging.f_d_ts.clone(),
            pilot_power: dbm_to_w(self.estimation.pilot_power_dbm),
            p_u: dbm_to_w(self.uplink.power_dbm),
            p_d: dbm_to_w(self.downlink.power_dbm),
            sigma2_ul: dbm_to_w(self.uplink.noise_dbm),
            sigma2_dl: dbm_to_w(self.downlink.noise_dbm),
            sc_draws: self.uplink.sc_draws,
            sc_candidates: self.uplink.sc_candidates,
            sc_ordering: self.uplink.sc_ordering,
        })
    }

    /// Selected (scheme, power mode) pairs, uplink first.
    pub fn selections(&self) -> Vec<(Scheme, PowerMode)> {
        let mut out = Vec::new();
        for &s in &self.uplink.schemes {
            for &m in &self.uplink.power_modes {
                out.push((s, m));
            }
        }
        for &s in &self.downlink.schemes {
            for &m in &self.downlink.power_modes {
                out.push((s, m));
            }
        }
        out
    }

    pub fn sha256(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Empirical distribution of per-UE SE values.
///
/// Quantiles interpolate linearly between order statistics: with sorted
/// samples `x_1 <= ... <= x_m`, `h = (m - 1) q` and
/// `Q(q) = x_{floor h + 1} + (h - floor h)(x_{floor h + 2} - x_{floor h + 1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfSummary {
    sorted: Vec<f64>,
}

impl CdfSummary {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("empty sample".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::Numerical("NaN in SE samples".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let h = (self.sorted.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(self.sorted.len() - 1);
        self.sorted[lo] + (h - lo as f64) * (self.sorted[hi] - self.sorted[lo])
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// 95%-likely value: the 5th percentile.
    pub fn p05(&self) -> f64 {
        self.quantile(0.05)
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}

/// Summary statistics reported for every SE distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Median,
    P05,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::Mean, Statistic::Median, Statistic::P05];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Median => "median",
            Statistic::P05 => "p05",
        }
    }

    pub fn of(self, cdf: &CdfSummary) -> f64 {
        match self {
            Statistic::Mean => cdf.mean(),
            Statistic::Median => cdf.median(),
            Statistic::P05 => cdf.p05(),
        }
    }
}

/// Drop-level (cluster) bootstrap standard error of a statistic of the
/// pooled per-UE samples.
pub fn bootstrap_stderr(per_drop: &[Vec<f64>], stat: Statistic, resamples: usize, seed: u64) -> Result<f64> {
    let d = per_drop.len();
    if d < 2 || resamples < 2 {
        return Ok(f64::NAN);
    }
    let mut rng = stream(seed, 0, stat as u64, Purpose::Bootstrap);
    let mut values = Vec::with_capacity(resamples);
    let mut pooled = Vec::new();
    for _ in 0..resamples {
        pooled.clear();
        for _ in 0..d {
            pooled.extend_from_slice(&per_drop[rng.random_range(0..d)]);
        }
        values.push(stat.of(&CdfSummary::new(&pooled)?));
    }
    let mean = values.iter().sum::<f64>() / resamples as f64;
    Ok((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt())
}

/// Per-UE SE of every selected scheme in one drop.
#[derive(Debug, Clone, Serialize)]
pub struct DropResult {
    pub drop: u64,
    pub se: Vec<(Scheme, PowerMode, Vec<f64>)>,
    pub energy: Option<EnergyResult>,
}

impl DropResult {
    pub fn get(&self, scheme: Scheme, mode: PowerMode) -> Option<&[f64]> {
        self.se
            .iter()
            .find(|(s, m, _)| *s == scheme && *m == mode)
            .map(|(_, _, v)| v.as_slice())
    }
}

pub fn evaluate_drop(config: &RunConfig, params: &ModelParams, drop: u64) -> Result<DropResult> {
    let model = SystemModel::build(params, config.seed, drop)?;
    let se = config
        .selections()
        .into_iter()
        .map(|(s, m)| Ok((s, m, model.evaluate(s, m)?.se)))
        .collect::<Result<_>>()?;
    let energy = if config.energy.enabled {
        Some(model.energy(&config.energy.model, config.energy.bandwidth_mhz * 1e6, config.energy.power_mode)?)
    } else {
        None
    };
    Ok(DropResult { drop, se, energy })
}

/// All drops of a configuration, in drop order (evaluated in parallel).
pub fn simulate_drops(config: &RunConfig) -> Result<Vec<DropResult>> {
    config.validate()?;
    let params = config.model_params()?;
    (0..config.drops as u64)
        .into_par_iter()
        .map(|d| evaluate_drop(config, &params, d))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SchemeCdf {
    pub scheme: Scheme,
    pub power_mode: PowerMode,
    pub cdf: CdfSummary,
    pub per_drop: Vec<Vec<f64>>,
}

/// Mean of a per-drop quantity with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanEstimate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySummary {
    pub ee_total: MeanEstimate,
    pub p_total: MeanEstimate,
    pub se_sum: MeanEstimate,
}

impl EnergySummary {
    pub fn of(results: &[EnergyResult]) -> Self {
        let pick = |f: fn(&EnergyResult) -> f64| MeanEstimate::of(&results.iter().map(f).collect::<Vec<_>>());
        Self {
            ee_total: pick(|e| e.ee_total),
            p_total: pick(|e| e.p_total),
            se_sum: pick(|e| e.se_sum),
        }
    }
}

pub fn summarize(config: &RunConfig, drops: &[DropResult]) -> Result<(Vec<SchemeCdf>, Option<EnergySummary>)> {
    let mut cdfs = Vec::new();
    for (scheme, mode) in config.selections() {
        let per_drop: Vec<Vec<f64>> = drops
            .iter()
            .map(|d| d.get(scheme, mode).map(<[f64]>::to_vec).unwrap_or_default())
            .collect();
        let pooled: Vec<f64> = per_drop.iter().flatten().copied().collect();
        cdfs.push(SchemeCdf { scheme, power_mode: mode, cdf: CdfSummary::new(&pooled)?, per_drop });
    }
    let energy: Vec<EnergyResult> = drops.iter().filter_map(|d| d.energy).collect();
    let energy = (!energy.is_empty()).then(|| EnergySummary::of(&energy));
    Ok((cdfs, energy))
}

/// One line of the long-format statistics tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: String,
    pub scheme: String,
    pub power_mode: String,
    pub statistic: String,
    pub value: f64,
    pub stderr: f64,
}

const BOOTSTRAP_RESAMPLES: usize = 200;

fn statistic_rows(axis_value: &str, config: &RunConfig, cdfs: &[SchemeCdf], energy: Option<&EnergySummary>) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for c in cdfs {
        for stat in Statistic::ALL {
            rows.push(SweepRow {
                axis_value: axis_value.to_string(),
                scheme: c.scheme.name().into(),
                power_mode: c.power_mode.name().into(),
                statistic: stat.name().into(),
                value: stat.of(&c.cdf),
                stderr: bootstrap_stderr(&c.per_drop, stat, BOOTSTRAP_RESAMPLES, config.seed)?,
            });
        }
    }
    if let Some(e) = energy {
        for (name, m) in [("ee_total", e.ee_total), ("p_total", e.p_total), ("se_sum", e.se_sum)] {
            rows.push(SweepRow {
                axis_value: axis_value.to_string(),
                scheme: "lsfd+coherent".into(),
                power_mode: config.energy.power_mode.name().into(),
                statistic: name.into(),
                value: m.mean,
                stderr: m.stderr,
            });
        }
    }
    Ok(rows)
}

/// Result of [`run_experiment`]; nothing is written until
/// [`ExperimentResult::write`].
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: RunConfig,
    pub drops: Vec<DropResult>,
    pub cdfs: Vec<SchemeCdf>,
    pub energy: Option<EnergySummary>,
    pub summary: Vec<SweepRow>,
    pub oracle: Option<Vec<OracleRow>>,
}

impl ExperimentResult {
    pub fn oracle_passed(&self) -> bool {
        self.oracle.as_ref().is_none_or(|rows| rows.iter().all(|r| r.pass))
    }

    pub fn cdf(&self, scheme: Scheme, mode: PowerMode) -> Option<&CdfSummary> {
        self.cdfs
            .iter()
            .find(|c| c.scheme == scheme && c.power_mode == mode)
            .map(|c| &c.cdf)
    }

    /// Writes `cdf_<scheme>.csv`, `summary.csv`, `oracle_report.csv` (when
    /// the oracle ran) and `run_manifest.json`. Returns the file names.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let mut schemes: Vec<Scheme> = Vec::new();
        for c in &self.cdfs {
            if !schemes.contains(&c.scheme) {
                schemes.push(c.scheme);
            }
        }
        for scheme in schemes {
            // Columns as in every table; axis_value carries the CDF level.
            let mut rows = Vec::new();
            for c in self.cdfs.iter().filter(|c| c.scheme == scheme) {
                let m = c.cdf.len() as f64;
                for (i, v) in c.cdf.sorted().iter().enumerate() {
                    rows.push(SweepRow {
                        axis_value: format!("{}", (i + 1) as f64 / m),
                        scheme: scheme.name().into(),
                        power_mode: c.power_mode.name().into(),
                        statistic: "se".into(),
                        value: *v,
                        stderr: f64::NAN,
                    });
                }
            }
            let name = format!("cdf_{}.csv", scheme.name());
            write_csv(&dir.join(&name), &rows)?;
            files.push(name);
        }
        write_csv(&dir.join("summary.csv"), &self.summary)?;
        files.push("summary.csv".into());
        if let Some(oracle) = &self.oracle {
            write_csv(&dir.join("oracle_report.csv"), oracle)?;
            files.push("oracle_report.csv".into());
        }
        files.push("run_manifest.json".into());
        write_manifest(dir, &self.config, &files, self.oracle.as_ref().map(|_| self.oracle_passed()))?;
        Ok(files)
    }
}

/// Evaluates every drop, aggregates the distributions and, when
/// `config.trials > 0`, runs the oracle on drop 0.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentResult> {
    let drops = simulate_drops(config)?;
    let (cdfs, energy) = summarize(config, &drops)?;
    let summary = statistic_rows("", config, &cdfs, energy.as_ref())?;
    let oracle = if config.trials > 0 {
        Some(run_oracle(config, config.trials, OracleTolerance::default())?)
    } else {
        None
    };
    Ok(ExperimentResult { config: config.clone(), drops, cdfs, energy, summary, oracle })
}

/// Closed form against Monte Carlo on drop 0, at the first data instant and
/// 10 and 40 instants later (where the block is long enough).
pub fn run_oracle(config: &RunConfig, trials: usize, tol: OracleTolerance) -> Result<Vec<OracleRow>> {
    let params = config.model_params()?;
    let model = SystemModel::build(&params, config.seed, 0)?;
    let frame = model.frame();
    let offsets: Vec<usize> = [0, 10, 40].into_iter().filter(|o| frame.lambda() + o <= frame.tau_c).collect();
    let settings = OracleSettings::at_offsets(frame, &offsets, trials, config.seed, 0);
    let inp = OracleInputs::from(&model);
    let ul_mode = config.uplink.power_modes.first().copied().unwrap_or_default();
    let dl_mode = config.downlink.power_modes.first().copied().unwrap_or_default();
    let pc = model.uplink_pc(ul_mode);
    let mut rows = Vec::new();
    for &scheme in config.uplink.schemes.iter().filter(|s| matches!(s, Scheme::Lsfd | Scheme::Mf)) {
        rows.extend(uplink_oracle(inp, &pc, scheme, &settings)?.report(tol));
    }
    if !config.downlink.schemes.is_empty() {
        let dpc = model.downlink_pc(dl_mode)?;
        rows.extend(downlink_oracle(inp, &dpc, params.sigma2_dl, &settings)?.report(tol));
    }
    if config.uplink.schemes.contains(&Scheme::Sc) && params.dims.n == 1 {
        // Compare at each UE's serving AP.
        let se = smallcell_se_matrix_n1(&model.scenario, &model.traces, &model.pilots, &model.aging, frame, &pc, params.sigma2_ul)?;
        let (serving, _) = best_ap(&se);
        rows.extend(
            smallcell_oracle(inp, &pc, &settings)?
                .report(tol)
                .into_iter()
                .filter(|r| r.l == Some(serving[r.k])),
        );
    }
    Ok(rows)
}

/// Axes along which [`sweep`] varies the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    FdTs,
    N,
    L,
    TauP,
    Asd,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::FdTs => "f_D_Ts",
            SweepAxis::N => "N",
            SweepAxis::L => "L",
            SweepAxis::TauP => "tau_p",
            SweepAxis::Asd => "asd",
        }
    }

    /// Applies one axis value; `asd = inf` selects uncorrelated fading.
    pub fn apply(self, config: &mut RunConfig, value: f64) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(self.name(), format!("expected a positive integer, got {v}")))
            }
        };
        match self {
            SweepAxis::FdTs => config.aging.f_d_ts = vec![value],
            SweepAxis::N => config.scenario.antennas_per_ap = count(value)?,
            SweepAxis::L => config.scenario.num_aps = count(value)?,
            SweepAxis::TauP => config.aging.tau_p = count(value)?,
            SweepAxis::Asd => {
                config.scenario.uncorrelated = value.is_infinite();
                if value.is_finite() {
                    config.scenario.asd_deg = value;
                }
            }
        }
        config.validate()
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "f_D_Ts" | "f_d_ts" => SweepAxis::FdTs,
            "N" | "n" => SweepAxis::N,
            "L" | "l" => SweepAxis::L,
            "tau_p" => SweepAxis::TauP,
            "asd" | "asd_deg" => SweepAxis::Asd,
            other => return Err(Error::config("sweep", format!("unknown axis `{other}`"))),
        })
    }
}

/// Parses `axis=v1,v2,...`.
pub fn parse_sweep(spec: &str) -> Result<(SweepAxis, Vec<f64>)> {
    let (axis, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::config("sweep", "expected axis=v1,v2,..."))?;
    let values = values
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::config("sweep", format!("`{v}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((axis.trim().parse()?, values))
}

/// Re-runs the configuration at every axis value. Drops use the same seeds
/// at every value, so geometry and shadowing are shared across the sweep.
pub fn sweep(config: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::config("sweep", "no values"));
    }
    let mut rows = Vec::new();
    for &v in values {
        let mut c = config.clone();
        axis.apply(&mut c, v)?;
        let drops = simulate_drops(&c)?;
        let (cdfs, energy) = summarize(&c, &drops)?;
        rows.extend(statistic_rows(&format!("{v}"), &c, &cdfs, energy.as_ref())?);
    }
    Ok(rows)
}

pub fn write_sweep(dir: &Path, axis: SweepAxis, rows: &[SweepRow]) -> Result<String> {
    fs::create_dir_all(dir)?;
    let name = format!("sweep_{}.csv", axis.name());
    write_csv(&dir.join(&name), rows)?;
    Ok(name)
}

/// Total energy efficiency at one number of APs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyPoint {
    pub l: usize,
    pub summary: EnergySummary,
}

/// Energy efficiency against the number of APs, with only the schemes the
/// power model needs (uplink LSFD and coherent downlink) evaluated.
pub fn ee_vs_l_sweep(config: &RunConfig, l_values: &[usize]) -> Result<Vec<EnergyPoint>> {
    let mut c = config.clone();
    c.energy.enabled = true;
    c.uplink.schemes.clear();
    c.downlink.schemes.clear();
    l_values
        .iter()
        .map(|&l| {
            c.scenario.num_aps = l;
            let drops = simulate_drops(&c)?;
            let energy: Vec<EnergyResult> = drops.iter().filter_map(|d| d.energy).collect();
            Ok(EnergyPoint { l, summary: EnergySummary::of(&energy) })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let tmp = path.with_extension("csv.partial");
    {
        let mut w = csv::Writer::from_path(&tmp).map_err(|e| Error::Serialization(e.to_string()))?;
        for r in rows {
            w.serialize(r).map_err(|e| Error::Serialization(e.to_string()))?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    crate_name: &'static str,
    crate_version: &'static str,
    seed: u64,
    drops: usize,
    config_sha256: String,
    config: &'a RunConfig,
    files: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_passed: Option<bool>,
}

pub fn write_manifest(dir: &Path, config: &RunConfig, files: &[String], oracle_passed: Option<bool>) -> Result<()> {
    let manifest = Manifest {
        crate_name: env!("CARGO_PKG_NAME"),
        crate_version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        drops: config.drops,
        config_sha256: config.sha256()?,
        config,
        files,
        oracle_passed,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serialization(e.to_string()))?;
    fs::write(dir.join("run_manifest.json"), text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_convention() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        let c = CdfSummary::new(&x).unwrap();
        assert!((c.quantile(0.05) - 5.95).abs() < 1e-12);
        assert_eq!(c.median(), 50.5);
        let c = CdfSummary::new(&[3.0; 7]).unwrap();
        for q in [0.0, 0.05, 0.5, 1.0] {
            assert_eq!(c.quantile(q), 3.0);
        }
        assert!(CdfSummary::new(&[]).is_err());
    }

    #[test]
    fn config_round_trip_and_overrides() {
        let c = RunConfig::default();
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);

        let mut c = RunConfig::default();
        c.apply_override("scenario.num_aps", "50").unwrap();
        c.apply_override("aging.f_d_ts", "[0.001]").unwrap();
        c.apply_override("uplink.power_modes", "[\"full\", \"sccpc\"]").unwrap();
        assert_eq!(c.scenario.num_aps, 50);
        assert_eq!(c.aging.f_d_ts, vec![0.001]);
        assert_eq!(c.uplink.power_modes.len(), 2);
        assert!(matches!(c.apply_override("scenario.num_apps", "5"), Err(Error::Config { .. })));
        assert!(matches!(c.apply_override("scenario.num_aps", "0"), Err(Error::Config { .. })));
        assert!(matches!(RunConfig::from_toml_str("[scenario]\nbogus = 1\n"), Err(Error::Config { .. })));
    }

    #[test]
    fn empty_scheme_list_is_rejected() {
        let mut c = RunConfig::default();
        c.drops = 1;
        c.uplink.schemes.clear();
        c.downlink.schemes.clear();
        assert!(matches!(c.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn sweep_parsing() {
        let (axis, v) = parse_sweep("f_D_Ts=0,0.001,0.002").unwrap();
        assert_eq!(axis, SweepAxis::FdTs);
        assert_eq!(v, vec![0.0, 0.001, 0.002]);
        assert!(parse_sweep("speed=1").is_err());
        let (axis, v) = parse_sweep("asd=10,inf").unwrap();
        assert_eq!(axis, SweepAxis::Asd);
        assert!(v[1].is_infinite());
        let mut c = RunConfig::default();
        assert!(sweep(&c, SweepAxis::L, &[]).is_err());
        SweepAxis::Asd.apply(&mut c, f64::INFINITY).unwrap();
        assert!(c.scenario.uncorrelated);
        assert!(SweepAxis::N.apply(&mut c, 1.5).is_err());
    }

    #[test]
    fn disabling_contamination_gives_orthogonal_pilots() {
        let mut c = RunConfig::default();
        c.estimation.pilot_contamination = false;
        assert_eq!(c.frame().unwrap().tau_p, 20);
        c.aging.tau_c_from_doppler = true;
        c.aging.f_d_ts = vec![0.002];
        assert_eq!(c.frame().unwrap().tau_c, 191);
    }
}
