//! Uplink spectral efficiency: cell-free combining at the CPU with LSFD or
//! equal (MF) weights, the uncorrelated-fading special case, small cells and
//! statistical power control.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aging::{AgingProfile, FrameConfig};
use crate::error::{Error, Result};
use crate::estimation::{EstimationStatistics, PilotAssignment, TraceStatistics};
use crate::linalg::{psd_sqrt, quadratic_form, standard_complex_normal, CMatrix, CVector};
use crate::rng::{stream, Purpose};
use crate::scenario::{Scenario, PSD_TOLERANCE};
use crate::special::exp_scaled_e1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Lsfd,
    Mf,
    Sc,
    Coherent,
    Noncoherent,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Lsfd => "lsfd",
            Scheme::Mf => "mf",
            Scheme::Sc => "sc",
            Scheme::Coherent => "coherent",
            Scheme::Noncoherent => "noncoherent",
        }
    }

    pub fn is_uplink(self) -> bool {
        matches!(self, Scheme::Lsfd | Scheme::Mf | Scheme::Sc)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lsfd" => Scheme::Lsfd,
            "mf" => Scheme::Mf,
            "sc" => Scheme::Sc,
            "coherent" => Scheme::Coherent,
            "noncoherent" => Scheme::Noncoherent,
            other => return Err(Error::InvalidParameter(format!("unknown scheme `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    #[default]
    Full,
    Sccpc,
}

impl PowerMode {
    pub fn name(self) -> &'static str {
        match self {
            PowerMode::Full => "full",
            PowerMode::Sccpc => "sccpc",
        }
    }
}

/// Per-UE uplink power coefficients and the maximum data power.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkPowerControl {
    pub eta: Vec<f64>,
    /// Maximum uplink data power (W).
    pub p_u: f64,
}

impl UplinkPowerControl {
    pub fn full(k: usize, p_u: f64) -> Self {
        Self { eta: vec![1.0; k], p_u }
    }

    pub fn new(eta: Vec<f64>, p_u: f64) -> Result<Self> {
        if eta.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidParameter("power coefficients must lie in [0, 1]".into()));
        }
        Ok(Self { eta, p_u })
    }
}

/// SINR per UE per data instant and the resulting SE.
///
/// For the small-cell scheme the per-instant entry is the SINR equivalent of
/// the expected rate, `2^{E log2(1 + SINR)} - 1`.
#[derive(Debug, Clone, Serialize)]
pub struct SeResult {
    pub scheme: Scheme,
    pub tau_c: usize,
    /// `sinr[k][n - lambda]`.
    pub sinr: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub serving_ap: Option<Vec<usize>>,
}

impl SeResult {
    pub fn from_sinr(scheme: Scheme, tau_c: usize, sinr: Vec<Vec<f64>>) -> Self {
        let se = sinr.iter().map(|row| se_from_sinr(row, tau_c)).collect();
        Self {
            scheme,
            tau_c,
            sinr,
            se,
            serving_ap: None,
        }
    }
}

/// `(1 / tau_c) sum_n log2(1 + sinr[n])`.
pub fn se_from_sinr(sinr: &[f64], tau_c: usize) -> f64 {
    sinr.iter().map(|s| (1.0 + s).log2()).sum::<f64>() / tau_c as f64
}

/// Closed-form uplink SINR for arbitrary CPU weights, with the squared
/// temporal correlations at the current lag given explicitly (`rho2[i]`).
pub fn uplink_sinr_with_rho(
    traces: &TraceStatistics,
    pc: &UplinkPowerControl,
    sigma2: f64,
    k: usize,
    rho2: &[f64],
    a: &[Complex64],
) -> Result<f64> {
    let l_n = traces.l;
    if a.len() != l_n {
        return Err(Error::InvalidParameter(format!("expected {l_n} weights, got {}", a.len())));
    }
    if a.iter().all(|w| w.norm_sqr() == 0.0) {
        return Err(Error::InvalidParameter(format!("all-zero combining weights for UE {k}")));
    }
    let p = pc.p_u;
    let mut signal = Complex64::new(0.0, 0.0);
    let mut noise = 0.0;
    for l in 0..l_n {
        signal += a[l].conj() * traces.tr_q(k, l);
        noise += a[l].norm_sqr() * traces.tr_q(k, l);
    }
    let mut denom = sigma2 * noise;
    for i in 0..traces.k {
        let gamma: f64 = (0..l_n).map(|l| a[l].norm_sqr() * traces.tr_qr(k, i, l)).sum();
        denom += p * pc.eta[i] * gamma;
    }
    for &i in &traces.copilots[k] {
        if i == k {
            continue;
        }
        let c: Complex64 = (0..l_n).map(|l| a[l].conj() * traces.tr_qbar(k, i, l)).sum();
        denom += p * rho2[i] * pc.eta[i] * c.norm_sqr();
    }
    Ok(rho2[k] * p * pc.eta[k] * signal.norm_sqr() / denom)
}

fn rho2_at(aging: &AgingProfile, lag: usize) -> Vec<f64> {
    (0..aging.num_ues()).map(|i| aging.rho(i, lag).powi(2)).collect()
}

/// Closed-form SINR of UE `k` at data instant `n` (1-based) with weights `a`.
pub fn uplink_sinr(
    traces: &TraceStatistics,
    aging: &AgingProfile,
    frame: &FrameConfig,
    pc: &UplinkPowerControl,
    sigma2: f64,
    k: usize,
    n: usize,
    a: &[Complex64],
) -> Result<f64> {
    let lag = data_lag(frame, n)?;
    uplink_sinr_with_rho(traces, pc, sigma2, k, &rho2_at(aging, lag), a)
}

fn data_lag(frame: &FrameConfig, n: usize) -> Result<usize> {
    if n < frame.lambda() || n > frame.tau_c {
        return Err(Error::InvalidParameter(format!(
            "instant {n} outside the data phase {}..={}",
            frame.lambda(),
            frame.tau_c
        )));
    }
    Ok(n - frame.lambda())
}

/// Equal CPU weights `1/L`.
pub fn mf_weights(l: usize) -> Vec<Complex64> {
    vec![Complex64::new(1.0 / l as f64, 0.0); l]
}

/// Instant-independent parts of the LSFD problem for one UE, in a form that
/// makes every instant a small solve (Woodbury identity): the matrix to
/// invert is a positive diagonal plus one rank-one term per co-pilot UE.
struct LsfdKernel {
    d: Vec<f64>,
    b: Vec<f64>,
    /// Co-pilot UEs (excluding `k`) and their `c_ki` vectors.
    others: Vec<usize>,
    c: Vec<Vec<Complex64>>,
    /// `C^H D^{-1} C`.
    g: DMatrix<Complex64>,
    /// `C^H D^{-1} b`.
    u: DVector<Complex64>,
    /// `b^H D^{-1} b`.
    bdb: f64,
}

impl LsfdKernel {
    fn new(traces: &TraceStatistics, pc: &UplinkPowerControl, sigma2: f64, k: usize) -> Result<Self> {
        let l_n = traces.l;
        let mut d = vec![0.0; l_n];
        for (l, dl) in d.iter_mut().enumerate() {
            let interference: f64 = (0..traces.k).map(|i| pc.eta[i] * traces.tr_qr(k, i, l)).sum();
            *dl = pc.p_u * interference + sigma2 * traces.tr_q(k, l);
        }
        if d.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Numerical(format!("LSFD matrix of UE {k} is singular")));
        }
        let b: Vec<f64> = (0..l_n).map(|l| traces.tr_q(k, l)).collect();
        let others: Vec<usize> = traces.copilots[k].iter().copied().filter(|&i| i != k).collect();
        let c: Vec<Vec<Complex64>> = others
            .iter()
            .map(|&i| (0..l_n).map(|l| traces.tr_qbar(k, i, l)).collect())
            .collect();
        let m = others.len();
        let g = DMatrix::from_fn(m, m, |x, y| {
            (0..l_n).map(|l| c[x][l].conj() * c[y][l] / d[l]).sum()
        });
        let u = DVector::from_fn(m, |x, _| (0..l_n).map(|l| c[x][l].conj() * b[l] / d[l]).sum());
        let bdb = (0..l_n).map(|l| b[l] * b[l] / d[l]).sum();
        Ok(Self { d, b, others, c, g, u, bdb })
    }

    fn rank_weights(&self, pc: &UplinkPowerControl, rho2: &[f64]) -> Vec<f64> {
        self.others.iter().map(|&i| pc.p_u * rho2[i] * pc.eta[i]).collect()
    }

    /// `(I + W G)^{-1} W u`.
    fn correction(&self, w: &[f64]) -> Result<DVector<Complex64>> {
        let m = w.len();
        let mut s = DMatrix::<Complex64>::identity(m, m);
        for x in 0..m {
            for y in 0..m {
                s[(x, y)] += w[x] * self.g[(x, y)];
            }
        }
        let rhs = DVector::from_fn(m, |x, _| w[x] * self.u[x]);
        s.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("LSFD capacity matrix is singular".into()))
    }

    /// `b^H M^{-1} b`.
    fn quadratic(&self, pc: &UplinkPowerControl, rho2: &[f64]) -> Result<f64> {
        if self.others.is_empty() {
            return Ok(self.bdb);
        }
        let w = self.rank_weights(pc, rho2);
        let corr = self.correction(&w)?;
        let sub: Complex64 = self.u.iter().zip(corr.iter()).map(|(u, v)| u.conj() * v).sum();
        Ok(self.bdb - sub.re)
    }

    /// `M^{-1} b`.
    fn weights(&self, pc: &UplinkPowerControl, rho2: &[f64]) -> Result<Vec<Complex64>> {
        let l_n = self.b.len();
        let mut x: Vec<Complex64> = (0..l_n).map(|l| Complex64::new(self.b[l] / self.d[l], 0.0)).collect();
        if !self.others.is_empty() {
            let w = self.rank_weights(pc, rho2);
            let corr = self.correction(&w)?;
            for l in 0..l_n {
                let cv: Complex64 = (0..self.others.len()).map(|j| self.c[j][l] * corr[j]).sum();
                x[l] -= cv / self.d[l];
            }
        }
        Ok(x)
    }
}

/// SINR-maximising CPU weights of UE `k` at instant `n`.
pub fn lsfd_weights(
    traces: &TraceStatistics,
    aging: &AgingProfile,
    frame: &FrameConfig,
    pc: &UplinkPowerControl,
    sigma2: f64,
    k: usize,
    n: usize,
) -> Result<Vec<Complex64>> {
    let lag = data_lag(frame, n)?;
    LsfdKernel::new(traces, pc, sigma2, k)?.weights(pc, &rho2_at(aging, lag))
}

/// LSFD SINR via the quadratic form `rho_k^2 p eta_k b^H M^{-1} b`.
pub fn lsfd_sinr(
    traces: &TraceStatistics,
    aging: &AgingProfile,
    frame: &FrameConfig,
    pc: &UplinkPowerControl,
    sigma2: f64,
    k: usize,
    n: usize,
) -> Result<f64> {
    let lag = data_lag(frame, n)?;
    let rho2 = rho2_at(aging, lag);
    let q = LsfdKernel::new(traces, pc, sigma2, k)?.quadratic(pc, &rho2)?;
    Ok(rho2[k] * pc.p_u * pc.eta[k] * q)
}

/// Cell-free uplink SE of every UE with LSFD or MF weights.
pub fn uplink_se(
    traces: &TraceStatistics,
    aging: &AgingProfile,
    frame: &FrameConfig,
    pc: &UplinkPowerControl,
    sigma2: f64,
    scheme: Scheme,
) -> Result<SeResult> {
    let lambda = frame.lambda();
    let rho2: Vec<Vec<f64>> = (0..=frame.tau_c - lambda).map(|lag| rho2_at(aging, lag)).collect();
    let mut sinr = Vec::with_capacity(traces.k);
    match scheme {
        Scheme::Lsfd => {
            for k in 0..traces.k {
                let kernel = LsfdKernel::new(traces, pc, sigma2, k)?;
                let row = rho2
                    .iter()
                    .map(|r2| Ok(r2[k] * pc.p_u * pc.eta[k] * kernel.quadratic(pc, r2)?))
                    .collect::<Result<Vec<_>>>()?;
                sinr.push(row);
            }
        }
        Scheme::Mf => {
            let a = mf_weights(traces.l);
            for k in 0..traces.k {
                let row = rho2
                    .iter()
                    .map(|r2| uplink_sinr_with_rho(traces, pc, sigma2, k, r2, &a))
                    .collect::<Result<Vec<_>>>()?;
                sinr.push(row);
            }
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "`{other}` is not a cell-free uplink scheme"
            )))
        }
    }
    Ok(SeResult::from_sinr(scheme, frame.tau_c, sinr))
}

/// Uplink SINR for uncorrelated fading written directly in terms of
/// `gamma_kl` and `beta_il`.
pub fn uplink_sinr_uncorrelated(
    gamma: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    n_antennas: usize,
    pilots: &PilotAssignment,
    pc: &UplinkPowerControl,
    sigma2: f64,
    k: usize,
    rho2: &[f64],
    a: &[Complex64],
) -> Result<f64> {
    let (k_n, l_n) = gamma.shape();
    if a.len() != l_n || beta.shape() != (k_n, l_n) {
        return Err(Error::InvalidParameter("shape mismatch in uncorrelated SINR".into()));
    }
    let nf = n_antennas as f64;
    let p = pc.p_u;
    let signal: Complex64 = (0..l_n).map(|l| a[l].conj() * gamma[(k, l)]).sum();
    let mut denom = sigma2 * (0..l_n).map(|l| a[l].norm_sqr() * gamma[(k, l)]).sum::<f64>();
    for i in 0..k_n {
        denom += p * pc.eta[i] * (0..l_n).map(|l| a[l].norm_sqr() * gamma[(k, l)] * beta[(i, l)]).sum::<f64>();
        if i != k && pilots.shares(k, i) {
            let c: Complex64 = (0..l_n)
                .map(|l| a[l].conj() * (gamma[(k, l)] * gamma[(i, l)]).sqrt())
                .sum();
            denom += p * nf * rho2[i] * pc.eta[i] * c.norm_sqr();
        }
    }
    Ok(rho2[k] * p * pc.eta[k] * nf * signal.norm_sqr() / denom)
}

/// Uncorrelated-fading SE for LSFD or MF weights; fails for correlated drops.
pub fn uplink_se_uncorrelated(
    scenario: &Scenario,
    stats: &EstimationStatistics,
    pilots: &PilotAssignment,
    aging: &AgingProfile,
    frame: &FrameConfig,
    pc: &UplinkPowerControl,
    scheme: Scheme,
) -> Result<SeResult> {
    let gamma = stats.gamma.as_ref().ok_or_else(|| {
        Error::InvalidParameter("uncorrelated SINR requested for correlated fading".into())
    })?;
    let beta = &scenario.lsf.beta;
    let n = scenario.dims.n;
    let traces = TraceStatistics::uncorrelated(gamma, beta, n, pilots);
    let lambda = frame.lambda();
    let mut sinr = Vec::with_capacity(scenario.dims.k);
    for k in 0..scenario.dims.k {
        let kernel = LsfdKernel::new(&traces, pc, stats.sigma2, k)?;
        let row = (lambda..=frame.tau_c)
            .map(|t| {
                let rho2 = rho2_at(aging, t - lambda);
                let a = match scheme {
                    Scheme::Lsfd => kernel.weights(pc, &rho2)?,
                    Scheme::Mf => mf_weights(scenario.dims.l),
                    other => {
                        return Err(Error::InvalidParameter(format!(
                            "`{other}` is not a cell-free uplink scheme"
                        )))
                    }
                };
                uplink_sinr_uncorrelated(gamma, beta, n, pilots, pc, stats.sigma2, k, &rho2, &a)
            })
            .collect::<Result<Vec<_>>>()?;
        sinr.push(row);
    }
    Ok(SeResult::from_sinr(scheme, frame.tau_c, sinr))
}

/// Statistical power control.
///
/// Cell-free: `eta_k = min_i beta_i / beta_k` with `beta_k = sum_l beta_kl`.
/// Small cell: `eta_k = min_i beta_{i l_i} / beta_{k l_k}` over serving APs.
pub fn uplink_sccpc(beta: &DMatrix<f64>, serving_ap: Option<&[usize]>) -> Vec<f64> {
    let strength: Vec<f64> = match serving_ap {
        None => (0..beta.nrows()).map(|k| beta.row(k).sum()).collect(),
        Some(ap) => (0..beta.nrows()).map(|k| beta[(k, ap[k])]).collect(),
    };
    let min = strength.iter().copied().fold(f64::INFINITY, f64::min);
    strength.iter().map(|s| min / s).collect()
}

/// Interference ratio `A_kl[n]` of the single-antenna small-cell rate.
///
/// Co-pilot UE `i` contributes its coherent (estimate-aligned) power
/// `eta_i rho_i^2[n-lambda] rho_i^2[lambda-t_i] p_i beta_il^2` relative to
/// the same quantity for UE `k`.
fn smallcell_ratio(
    beta: &DMatrix<f64>,
    pilots: &PilotAssignment,
    aging: &AgingProfile,
    pc: &UplinkPowerControl,
    lambda: usize,
    k: usize,
    l: usize,
    lag: usize,
) -> f64 {
    let power = |i: usize| {
        pc.eta[i]
            * aging.rho(i, lag).powi(2)
            * aging.rho(i, lambda - pilots.t[i]).powi(2)
            * pilots.p[i]
            * beta[(i, l)].powi(2)
    };
    let own = power(k);
    let others: f64 = pilots
        .sharing(k)
        .into_iter()
        .filter(|&i| i != k)
        .map(power)
        .sum();
    if others == 0.0 {
        0.0
    } else {
        others / own
    }
}

/// `E{ln(1 + w (1 + A) X)} - E{ln(1 + w A X)}` for `X ~ Exp(1)`, in bits.
pub fn smallcell_rate(w: f64, a: f64) -> f64 {
    if !(w > 0.0) {
        return 0.0;
    }
    let first = exp_scaled_e1(1.0 / (w * (1.0 + a)));
    let second = if a < 1e-14 { 0.0 } else { exp_scaled_e1(1.0 / (w * a)) };
    (first - second) / std::f64::consts::LN_2
}

/// Closed-form single-antenna small-cell rate (bits) of UE `k` served by AP
/// `l` at data lag `lag = n - lambda`.
#[allow(clippy::too_many_arguments)]
pub fn smallcell_rate_n1(
    scenario: &Scenario,
    traces: &TraceStatistics,
    pilots: &PilotAssignment,
    aging: &AgingProfile,
    frame: &FrameConfig,
    pc: &UplinkPowerControl,
    sigma2: f64,
    k: usize,
    l: usize,
    lag: usize,
) -> f64 {
    let beta = &scenario.lsf.beta;
    let total: f64 = (0..scenario.dims.k).map(|i| pc.eta[i] * beta[(i, l)]).sum();
    let known: f64 = pilots
        .sharing(k)
        .iter()
        .map(|&i| aging.rho(i, lag).powi(2) * pc.eta[i] * traces.tr_q(i, l))
        .sum();
    let denom = pc.p_u * total - pc.p_u * known + sigma2;
    let w = aging.rho(k, lag).powi(2) * pc.p_u * pc.eta[k] * traces.tr_q(k, l) / denom;
    let a = smallcell_ratio(beta, pilots, aging, pc, frame.lambda(), k, l, lag);
    smallcell_rate(w, a)
}

/// Single-antenna small-cell SE in closed form, for every UE at every AP.
///
/// Returns the K x L matrix of per-AP SE values.
pub fn smallcell_se_matrix_n1(
    scenario: &Scenario,
    traces: &TraceStatistics,
    pilots: &PilotAssignment,
    aging: &AgingProfile,
    frame: &FrameConfig,
    pc: &UplinkPowerControl,
    sigma2: f64,
) -> Result<DMatrix<f64>> {
    if scenario.dims.n != 1 {
        return Err(Error::InvalidParameter(format!(
            "closed-form small-cell SE needs N = 1, got N = {}",
            scenario.dims.n
        )));
    }
    let (k_n, l_n) = (scenario.dims.k, scenario.dims.l);
    let lags = frame.tau_c - frame.lambda();
    Ok(DMatrix::from_fn(k_n, l_n, |k, l| {
        (0..=lags)
            .map(|lag| smallcell_rate_n1(scenario, traces, pilots, aging, frame, pc, sigma2, k, l, lag))
            .sum::<f64>()
            / frame.tau_c as f64
    }))
}

/// Picks the best AP per UE from a K x L SE matrix.
pub fn best_ap(se: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
    (0..se.nrows())
        .map(|k| {
            let mut best = (0, f64::NEG_INFINITY);
            for l in 0..se.ncols() {
                if se[(k, l)] > best.1 {
                    best = (l, se[(k, l)]);
                }
            }
            best
        })
        .unzip()
}

/// How the small-cell expectation is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmallCellMode {
    /// Exponential-integral closed form; requires `N = 1`.
    ClosedFormN1,
    /// Monte Carlo over channel-estimate draws, restricted to the
    /// `candidates` strongest APs of each UE.
    MonteCarlo {
        draws: usize,
        candidates: usize,
        seed: u64,
        drop: u64,
    },
}

/// Small-cell SE with per-UE serving-AP selection.
#[allow(clippy::too_many_arguments)]
pub fn smallcell_se(
    scenario: &Scenario,
    stats: &EstimationStatistics,
    traces: &TraceStatistics,
    pilots: &PilotAssignment,
    aging: &AgingProfile,
    frame: &FrameConfig,
    pc: &UplinkPowerControl,
    mode: SmallCellMode,
) -> Result<SeResult> {
    let se = match mode {
        SmallCellMode::ClosedFormN1 => {
            smallcell_se_matrix_n1(scenario, traces, pilots, aging, frame, pc, stats.sigma2)?
        }
        SmallCellMode::MonteCarlo {
            draws,
            candidates,
            seed,
            drop,
        } => smallcell_se_matrix_mc(scenario, stats, pilots, aging, frame, pc, draws, candidates, seed, drop)?,
    };
    let (serving, best) = best_ap(&se);
    let data = frame.data_len();
    // Report the per-instant SINR equivalent of the achieved average rate.
    let sinr = best
        .iter()
        .map(|&s| vec![(s * frame.tau_c as f64 / data as f64).exp2() - 1.0; data])
        .collect();
    Ok(SeResult {
        scheme: Scheme::Sc,
        tau_c: frame.tau_c,
        sinr,
        se: best,
        serving_ap: Some(serving),
    })
}

/// Indices of the `m` largest entries of a row, strongest first.
pub fn strongest_aps(beta: &DMatrix<f64>, k: usize, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..beta.ncols()).collect();
    idx.sort_by(|&a, &b| beta[(k, b)].total_cmp(&beta[(k, a)]));
    idx.truncate(m.max(1));
    idx
}

/// Monte Carlo evaluation of the general small-cell rate. Entries for APs
/// outside a UE's candidate set are `-inf`.
#[allow(clippy::too_many_arguments)]
pub fn smallcell_se_matrix_mc(
    scenario: &Scenario,
    stats: &EstimationStatistics,
    pilots: &PilotAssignment,
    aging: &AgingProfile,
    frame: &FrameConfig,
    pc: &UplinkPowerControl,
    draws: usize,
    candidates: usize,
    seed: u64,
    drop: u64,
) -> Result<DMatrix<f64>> {
    if draws == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let (k_n, l_n, n) = (scenario.dims.k, scenario.dims.l, scenario.dims.n);
    let lambda = frame.lambda();
    let lags = frame.tau_c - lambda + 1;
    let beta = &scenario.lsf.beta;
    let sigma2 = stats.sigma2;
    let p = pc.p_u;

    // users[l] = UEs with AP l among their candidates.
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); l_n];
    for k in 0..k_n {
        for l in strongest_aps(beta, k, candidates) {
            users[l].push(k);
        }
    }
    let groups = aging.doppler_groups();
    let group_of: Vec<usize> = {
        let mut g = vec![0; k_n];
        for (gi, members) in groups.iter().enumerate() {
            for &k in members {
                g[k] = gi;
            }
        }
        g
    };
    let rho2: Vec<Vec<f64>> = groups
        .iter()
        .map(|m| (0..lags).map(|lag| aging.rho(m[0], lag).powi(2)).collect())
        .collect();

    let mut out = DMatrix::from_element(k_n, l_n, f64::NEG_INFINITY);
    for l in 0..l_n {
        if users[l].is_empty() {
            continue;
        }
        let mut rng = stream(seed, drop, l as u64, Purpose::SmallCell);
        // Received pilot signals are Gaussian with covariance Psi^{-1}.
        let z_sqrt: Vec<CMatrix> = (1..=frame.tau_p)
            .map(|t| {
                let mut c = CMatrix::from_diagonal_element(n, n, Complex64::new(sigma2, 0.0));
                for i in pilots.users_of(t) {
                    c += scenario.r(i, l).scale(pilots.p[i]);
                }
                psd_sqrt(&c, PSD_TOLERANCE)
            })
            .collect::<Result<_>>()?;
        let mut cov = CMatrix::from_diagonal_element(n, n, Complex64::new(sigma2, 0.0));
        for i in 0..k_n {
            cov += scenario.r(i, l).scale(p * pc.eta[i]);
        }
        let mut acc = vec![0.0; users[l].len()];
        let mut s = vec![0.0; groups.len()];
        for _ in 0..draws {
            let z: Vec<CVector> = z_sqrt.iter().map(|m| m * standard_complex_normal(&mut rng, n)).collect();
            let hhat: Vec<CVector> = (0..k_n).map(|i| stats.estimator(i, l) * &z[pilots.t[i] - 1]).collect();
            for (slot, &k) in users[l].iter().enumerate() {
                let hk = &hhat[k];
                let norm2 = hk.norm_squared();
                if norm2 == 0.0 {
                    continue;
                }
                let zq = quadratic_form(hk, &cov);
                s.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..k_n {
                    let mut term = -quadratic_form(hk, stats.q(i, l));
                    if i != k {
                        term += hk.dotc(&hhat[i]).norm_sqr();
                    }
                    s[group_of[i]] += p * pc.eta[i] * term;
                }
                let num = p * pc.eta[k] * norm2 * norm2;
                let gk = group_of[k];
                let mut rate = 0.0;
                for lag in 0..lags {
                    let den = zq + s.iter().zip(&rho2).map(|(sg, r)| sg * r[lag]).sum::<f64>();
                    rate += (1.0 + rho2[gk][lag] * num / den).log2();
                }
                acc[slot] += rate;
            }
        }
        for (slot, &k) in users[l].iter().enumerate() {
            out[(k, l)] = acc[slot] / (draws as f64 * frame.tau_c as f64);
        }
    }
    Ok(out)
}
