//! Downlink spectral efficiency with maximum-ratio precoding: coherent joint
//! transmission, non-coherent transmission decoded by successive
//! interference cancellation, and statistical power control.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::aging::{AgingProfile, FrameConfig};
use crate::error::{Error, Result};
use crate::estimation::{PilotAssignment, TraceStatistics};
use crate::uplink::{PowerMode, Scheme, SeResult};

/// Per-(UE, AP) downlink power coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkPowerControl {
    /// K x L.
    pub mu: DMatrix<f64>,
    /// Per-AP maximum power (W).
    pub p_d: f64,
    pub mode: PowerMode,
}

impl DownlinkPowerControl {
    /// `sum_k mu_kl tr(Q_kl)` per AP; the power constraint asks for `<= 1`.
    pub fn load(&self, traces: &TraceStatistics) -> Vec<f64> {
        (0..traces.l)
            .map(|l| (0..traces.k).map(|k| self.mu[(k, l)] * traces.tr_q(k, l)).sum())
            .collect()
    }
}

/// `mu_kl = w_k / sum_i tr(Q_il) w_i` with `w_k = 1 / mean_l beta_kl` for
/// statistical power control and `w_k = 1` for full power. Both saturate
/// every AP's power budget.
pub fn downlink_sccpc(
    traces: &TraceStatistics,
    beta: &DMatrix<f64>,
    p_d: f64,
    mode: PowerMode,
) -> Result<DownlinkPowerControl> {
    let (k_n, l_n) = (traces.k, traces.l);
    let weight: Vec<f64> = match mode {
        PowerMode::Full => vec![1.0; k_n],
        PowerMode::Sccpc => (0..k_n)
            .map(|k| l_n as f64 / beta.row(k).sum())
            .collect(),
    };
    let mut mu = DMatrix::zeros(k_n, l_n);
    for l in 0..l_n {
        let denom: f64 = (0..k_n).map(|i| traces.tr_q(i, l) * weight[i]).sum();
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::Numerical(format!("AP {l} serves zero estimated channel energy")));
        }
        for k in 0..k_n {
            mu[(k, l)] = weight[k] / denom;
        }
    }
    Ok(DownlinkPowerControl { mu, p_d, mode })
}

/// Coherent SINR of UE `k` given `rho_k^2` at the current lag.
pub fn coherent_sinr(
    traces: &TraceStatistics,
    dpc: &DownlinkPowerControl,
    sigma2: f64,
    k: usize,
    rho2_k: f64,
) -> f64 {
    let (k_n, l_n) = (traces.k, traces.l);
    let p = dpc.p_d;
    let signal: f64 = (0..l_n).map(|l| dpc.mu[(k, l)].sqrt() * traces.tr_q(k, l)).sum();
    let mut denom = sigma2;
    for i in 0..k_n {
        denom += p * (0..l_n).map(|l| dpc.mu[(i, l)] * traces.tr_qr(i, k, l)).sum::<f64>();
    }
    for &i in &traces.copilots[k] {
        if i != k {
            let c: Complex64 = (0..l_n).map(|l| dpc.mu[(i, l)].sqrt() * traces.tr_qbar(k, i, l)).sum();
            denom += rho2_k * p * c.norm_sqr();
        }
    }
    rho2_k * p * signal * signal / denom
}

/// Non-coherent SINR of UE `k` given `rho_k^2` at the current lag.
pub fn noncoherent_sinr(
    traces: &TraceStatistics,
    dpc: &DownlinkPowerControl,
    sigma2: f64,
    k: usize,
    rho2_k: f64,
) -> f64 {
    let (k_n, l_n) = (traces.k, traces.l);
    let p = dpc.p_d;
    let signal: f64 = (0..l_n).map(|l| dpc.mu[(k, l)] * traces.tr_q(k, l).powi(2)).sum();
    let mut denom = sigma2;
    for i in 0..k_n {
        denom += p * (0..l_n).map(|l| dpc.mu[(i, l)] * traces.tr_qr(i, k, l)).sum::<f64>();
    }
    for &i in &traces.copilots[k] {
        if i != k {
            let c: f64 = (0..l_n).map(|l| dpc.mu[(i, l)] * traces.tr_qbar(k, i, l).norm_sqr()).sum();
            denom += rho2_k * p * c;
        }
    }
    rho2_k * p * signal / denom
}

fn evaluate(
    traces: &TraceStatistics,
    aging: &AgingProfile,
    frame: &FrameConfig,
    dpc: &DownlinkPowerControl,
    sigma2: f64,
    scheme: Scheme,
    f: impl Fn(&TraceStatistics, &DownlinkPowerControl, f64, usize, f64) -> f64,
) -> SeResult {
    let lambda = frame.lambda();
    let sinr = (0..traces.k)
        .map(|k| {
            (lambda..=frame.tau_c)
                .map(|n| f(traces, dpc, sigma2, k, aging.rho(k, n - lambda).powi(2)))
                .collect()
        })
        .collect();
    SeResult::from_sinr(scheme, frame.tau_c, sinr)
}

pub fn downlink_se(
    traces: &TraceStatistics,
    aging: &AgingProfile,
    frame: &FrameConfig,
    dpc: &DownlinkPowerControl,
    sigma2: f64,
    scheme: Scheme,
) -> Result<SeResult> {
    match scheme {
        Scheme::Coherent => Ok(evaluate(traces, aging, frame, dpc, sigma2, scheme, coherent_sinr)),
        Scheme::Noncoherent => Ok(evaluate(traces, aging, frame, dpc, sigma2, scheme, noncoherent_sinr)),
        other => Err(Error::InvalidParameter(format!("`{other}` is not a downlink scheme"))),
    }
}

/// Coherent SINR for uncorrelated fading, written with `gamma` and `beta`.
#[allow(clippy::too_many_arguments)]
pub fn coherent_sinr_uncorrelated(
    gamma: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    n_antennas: usize,
    pilots: &PilotAssignment,
    dpc: &DownlinkPowerControl,
    sigma2: f64,
    k: usize,
    rho2_k: f64,
) -> f64 {
    let (k_n, l_n) = gamma.shape();
    let nf = n_antennas as f64;
    let p = dpc.p_d;
    let signal: f64 = (0..l_n).map(|l| dpc.mu[(k, l)].sqrt() * gamma[(k, l)]).sum();
    let mut denom = sigma2;
    for i in 0..k_n {
        denom += p * nf * (0..l_n).map(|l| dpc.mu[(i, l)] * gamma[(i, l)] * beta[(k, l)]).sum::<f64>();
        if i != k && pilots.shares(k, i) {
            let c: f64 = (0..l_n)
                .map(|l| dpc.mu[(i, l)].sqrt() * (gamma[(k, l)] * gamma[(i, l)]).sqrt())
                .sum();
            denom += rho2_k * p * nf * nf * c * c;
        }
    }
    rho2_k * p * nf * nf * signal * signal / denom
}
