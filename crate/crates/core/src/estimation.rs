//! Pilot assignment and MMSE estimation statistics under channel aging.
//!
//! Every closed form downstream is a function of the per-pair traces
//! collected in [`TraceStatistics`]; the matrices themselves are kept for
//! the Monte Carlo oracle and for small-cell evaluation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::aging::{AgingProfile, FrameConfig};
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, standard_complex_normal, trace, trace_product, CMatrix, CVector};
use crate::rng::{stream, Purpose};
use crate::scenario::{Scenario, PSD_TOLERANCE};

/// Time-multiplexed pilots: UE `k` transmits only at instant `t[k]` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PilotAssignment {
    pub tau_p: usize,
    pub t: Vec<usize>,
    /// Pilot transmit powers (W).
    pub p: Vec<f64>,
}

impl PilotAssignment {
    pub fn new(tau_p: usize, t: Vec<usize>, p: Vec<f64>) -> Result<Self> {
        if t.len() != p.len() {
            return Err(Error::InvalidParameter("pilot index and power lengths differ".into()));
        }
        if let Some(bad) = t.iter().find(|&&ti| ti == 0 || ti > tau_p) {
            return Err(Error::InvalidParameter(format!(
                "pilot instant {bad} outside 1..={tau_p}"
            )));
        }
        if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("pilot powers must be finite and >= 0".into()));
        }
        Ok(Self { tau_p, t, p })
    }

    pub fn num_ues(&self) -> usize {
        self.t.len()
    }

    /// `P_k`, including `k` itself, in increasing order.
    pub fn sharing(&self, k: usize) -> Vec<usize> {
        (0..self.t.len()).filter(|&i| self.t[i] == self.t[k]).collect()
    }

    /// UEs on pilot instant `t` (1-based).
    pub fn users_of(&self, t: usize) -> Vec<usize> {
        (0..self.t.len()).filter(|&i| self.t[i] == t).collect()
    }

    #[inline]
    pub fn shares(&self, k: usize, i: usize) -> bool {
        self.t[k] == self.t[i]
    }
}

/// Shuffles the UEs and deals them round-robin over the pilot instants, so
/// set sizes differ by at most one.
pub fn assign_pilots(k: usize, tau_p: usize, p: f64, seed: u64, drop: u64) -> Result<PilotAssignment> {
    if tau_p == 0 {
        return Err(Error::InvalidParameter("tau_p must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut stream(seed, drop, 0, Purpose::Pilots));
    let mut t = vec![0; k];
    for (slot, &ue) in order.iter().enumerate() {
        t[ue] = slot % tau_p + 1;
    }
    PilotAssignment::new(tau_p, t, vec![p; k])
}

/// Matrices of the MMSE estimator for one drop.
#[derive(Debug, Clone)]
pub struct EstimationStatistics {
    pub k: usize,
    pub l: usize,
    pub n: usize,
    pub sigma2: f64,
    /// `Psi` per (pilot instant, AP): index `(t - 1) * L + l`.
    psi: Vec<CMatrix>,
    /// Estimator `rho_k sqrt(p_k) R_kl Psi_kl` per (k, l).
    estimator: Vec<CMatrix>,
    q: Vec<CMatrix>,
    /// Per k: co-pilot list and `Qbar_kil` for those `i` (all APs).
    copilots: Vec<Vec<usize>>,
    qbar: Vec<Vec<Vec<CMatrix>>>,
    /// Scalar estimate variances when every `R_kl` is a scaled identity.
    pub gamma: Option<DMatrix<f64>>,
}

impl EstimationStatistics {
    pub fn compute(
        scenario: &Scenario,
        pilots: &PilotAssignment,
        aging: &AgingProfile,
        frame: &FrameConfig,
        sigma2: f64,
    ) -> Result<Self> {
        let (k_n, l_n, n) = (scenario.dims.k, scenario.dims.l, scenario.dims.n);
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!("noise power must be positive, got {sigma2}")));
        }
        if pilots.num_ues() != k_n || aging.num_ues() != k_n {
            return Err(Error::InvalidParameter("pilot/aging UE counts do not match scenario".into()));
        }
        if pilots.tau_p != frame.tau_p {
            return Err(Error::InvalidParameter("pilot assignment built for a different tau_p".into()));
        }
        let lambda = frame.lambda();
        let amp = |k: usize| aging.rho(k, lambda - pilots.t[k]) * pilots.p[k].sqrt();

        let mut psi = Vec::with_capacity(frame.tau_p * l_n);
        for t in 1..=frame.tau_p {
            let users = pilots.users_of(t);
            for l in 0..l_n {
                let mut c = CMatrix::from_diagonal_element(n, n, Complex64::new(sigma2, 0.0));
                for &i in &users {
                    c += scenario.r(i, l).scale(pilots.p[i]);
                }
                let chol = c.cholesky().ok_or_else(|| {
                    Error::Numerical(format!("pilot covariance at AP {l}, instant {t} not positive definite"))
                })?;
                psi.push(chol.inverse());
            }
        }

        let mut estimator = Vec::with_capacity(k_n * l_n);
        let mut q = Vec::with_capacity(k_n * l_n);
        for k in 0..k_n {
            for l in 0..l_n {
                let r = scenario.r(k, l);
                let a = (r * &psi[(pilots.t[k] - 1) * l_n + l]).scale(amp(k));
                let qk = (&a * r).scale(amp(k));
                if qk.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Numerical(format!("non-finite estimate covariance for UE {k}, AP {l}")));
                }
                estimator.push(a);
                q.push(qk);
            }
        }

        let mut copilots = Vec::with_capacity(k_n);
        let mut qbar = Vec::with_capacity(k_n);
        for k in 0..k_n {
            let set = pilots.sharing(k);
            let mut per_i = Vec::with_capacity(set.len());
            for &i in &set {
                let mut per_l = Vec::with_capacity(l_n);
                for l in 0..l_n {
                    if i == k {
                        per_l.push(q[k * l_n + l].clone());
                    } else {
                        let m = scenario.r(i, l) * &psi[(pilots.t[k] - 1) * l_n + l] * scenario.r(k, l);
                        per_l.push(m.scale(amp(k) * amp(i)));
                    }
                }
                per_i.push(per_l);
            }
            copilots.push(set);
            qbar.push(per_i);
        }

        let gamma = scenario.correlation.is_uncorrelated().then(|| {
            DMatrix::from_fn(k_n, l_n, |k, l| {
                let denom: f64 = pilots
                    .sharing(k)
                    .iter()
                    .map(|&i| pilots.p[i] * scenario.beta(i, l))
                    .sum::<f64>()
                    + sigma2;
                let b = scenario.beta(k, l);
                amp(k).powi(2) * b * b / denom
            })
        });

        Ok(Self {
            k: k_n,
            l: l_n,
            n,
            sigma2,
            psi,
            estimator,
            q,
            copilots,
            qbar,
            gamma,
        })
    }

    #[inline]
    pub fn q(&self, k: usize, l: usize) -> &CMatrix {
        &self.q[k * self.l + l]
    }

    #[inline]
    pub fn estimator(&self, k: usize, l: usize) -> &CMatrix {
        &self.estimator[k * self.l + l]
    }

    /// `Psi` for pilot instant `t` (1-based) at AP `l`.
    pub fn psi(&self, t: usize, l: usize) -> &CMatrix {
        &self.psi[(t - 1) * self.l + l]
    }

    /// `Qbar_kil`, or `None` when `i` does not share UE `k`'s pilot.
    pub fn qbar(&self, k: usize, i: usize, l: usize) -> Option<&CMatrix> {
        let pos = self.copilots[k].iter().position(|&x| x == i)?;
        Some(&self.qbar[k][pos][l])
    }

    pub fn copilots(&self, k: usize) -> &[usize] {
        &self.copilots[k]
    }
}

/// Per-pair traces consumed by the closed forms.
#[derive(Debug, Clone)]
pub struct TraceStatistics {
    pub k: usize,
    pub l: usize,
    pub n: usize,
    /// `tr(Q_kl)`, K x L.
    pub tr_q: DMatrix<f64>,
    /// `tr(Q_kl R_il)` at `(k * K + i) * L + l`.
    tr_qr: Vec<f64>,
    /// `tr(Qbar_kil)` at `(k * K + i) * L + l`; zero outside pilot sets.
    tr_qbar: Vec<Complex64>,
    pub copilots: Vec<Vec<usize>>,
}

impl TraceStatistics {
    pub fn from_matrices(scenario: &Scenario, stats: &EstimationStatistics) -> Self {
        let (k_n, l_n) = (stats.k, stats.l);
        let tr_q = DMatrix::from_fn(k_n, l_n, |k, l| trace(stats.q(k, l)).re);
        let mut tr_qr = vec![0.0; k_n * k_n * l_n];
        let mut tr_qbar = vec![Complex64::new(0.0, 0.0); k_n * k_n * l_n];
        for k in 0..k_n {
            for i in 0..k_n {
                for l in 0..l_n {
                    let idx = (k * k_n + i) * l_n + l;
                    tr_qr[idx] = trace_product(stats.q(k, l), scenario.r(i, l)).re;
                    if let Some(m) = stats.qbar(k, i, l) {
                        tr_qbar[idx] = trace(m);
                    }
                }
            }
        }
        Self {
            k: k_n,
            l: l_n,
            n: stats.n,
            tr_q,
            tr_qr,
            tr_qbar,
            copilots: stats.copilots.clone(),
        }
    }

    /// Traces of the uncorrelated special case, built from `gamma` and `beta`
    /// alone: `N gamma_kl beta_il`, `N gamma_kl` and `N sqrt(gamma_kl gamma_il)`.
    pub fn uncorrelated(
        gamma: &DMatrix<f64>,
        beta: &DMatrix<f64>,
        n: usize,
        pilots: &PilotAssignment,
    ) -> Self {
        let (k_n, l_n) = gamma.shape();
        let nf = n as f64;
        let mut tr_qr = vec![0.0; k_n * k_n * l_n];
        let mut tr_qbar = vec![Complex64::new(0.0, 0.0); k_n * k_n * l_n];
        for k in 0..k_n {
            for i in 0..k_n {
                for l in 0..l_n {
                    let idx = (k * k_n + i) * l_n + l;
                    tr_qr[idx] = nf * gamma[(k, l)] * beta[(i, l)];
                    if pilots.shares(k, i) {
                        tr_qbar[idx] = Complex64::new(nf * (gamma[(k, l)] * gamma[(i, l)]).sqrt(), 0.0);
                    }
                }
            }
        }
        Self {
            k: k_n,
            l: l_n,
            n,
            tr_q: gamma.scale(nf),
            tr_qr,
            tr_qbar,
            copilots: (0..k_n).map(|k| pilots.sharing(k)).collect(),
        }
    }

    #[inline]
    pub fn tr_q(&self, k: usize, l: usize) -> f64 {
        self.tr_q[(k, l)]
    }

    #[inline]
    pub fn tr_qr(&self, k: usize, i: usize, l: usize) -> f64 {
        self.tr_qr[(k * self.k + i) * self.l + l]
    }

    #[inline]
    pub fn tr_qbar(&self, k: usize, i: usize, l: usize) -> Complex64 {
        self.tr_qbar[(k * self.k + i) * self.l + l]
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            tr_q: (0..self.k)
                .map(|k| (0..self.l).map(|l| self.tr_q(k, l)).collect())
                .collect(),
        }
    }
}

/// JSON-dumpable subset of the statistics.
#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub tr_q: Vec<Vec<f64>>,
}

/// Cached square roots `R_kl^{1/2}` for sampling.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    l: usize,
    sqrt_r: Vec<CMatrix>,
}

impl ChannelSampler {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let sqrt_r = scenario
            .correlation
            .r
            .iter()
            .map(|r| psd_sqrt(r, PSD_TOLERANCE))
            .collect::<Result<_>>()?;
        Ok(Self {
            l: scenario.dims.l,
            sqrt_r,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.l
    }

    /// One draw of `CN(0, R_kl)`.
    pub fn draw<R: Rng + ?Sized>(&self, k: usize, l: usize, rng: &mut R) -> CVector {
        let s = &self.sqrt_r[k * self.l + l];
        s * standard_complex_normal(rng, s.nrows())
    }
}

/// True channels at the anchor instant and their MMSE estimates.
#[derive(Debug, Clone)]
pub struct EstimateSample {
    pub l: usize,
    /// `h_kl[lambda]` at `k * L + l`.
    pub h: Vec<CVector>,
    /// `hhat_kl[lambda]` at `k * L + l`.
    pub hhat: Vec<CVector>,
}

impl EstimateSample {
    #[inline]
    pub fn h(&self, k: usize, l: usize) -> &CVector {
        &self.h[k * self.l + l]
    }

    #[inline]
    pub fn hhat(&self, k: usize, l: usize) -> &CVector {
        &self.hhat[k * self.l + l]
    }
}

/// Draws `h[lambda]`, the pilot-instant innovations and receiver noise, forms
/// the received pilot signals and applies the MMSE estimator.
pub fn sample_estimate<R: Rng + ?Sized>(
    scenario: &Scenario,
    sampler: &ChannelSampler,
    pilots: &PilotAssignment,
    aging: &AgingProfile,
    frame: &FrameConfig,
    stats: &EstimationStatistics,
    rng: &mut R,
) -> EstimateSample {
    let (k_n, l_n, n) = (scenario.dims.k, scenario.dims.l, scenario.dims.n);
    let lambda = frame.lambda();
    let mut h = Vec::with_capacity(k_n * l_n);
    for k in 0..k_n {
        for l in 0..l_n {
            h.push(sampler.draw(k, l, rng));
        }
    }
    // z[(t - 1) * L + l]
    let noise_sd = stats.sigma2.sqrt();
    let mut z: Vec<CVector> = (0..frame.tau_p * l_n)
        .map(|_| standard_complex_normal(rng, n).scale(noise_sd))
        .collect();
    for i in 0..k_n {
        let lag = lambda - pilots.t[i];
        let (r, rb) = (aging.rho(i, lag), aging.rho_bar(i, lag));
        let sp = pilots.p[i].sqrt();
        for l in 0..l_n {
            let f = sampler.draw(i, l, rng);
            let past = h[i * l_n + l].scale(r) + f.scale(rb);
            z[(pilots.t[i] - 1) * l_n + l] += past.scale(sp);
        }
    }
    let mut hhat = Vec::with_capacity(k_n * l_n);
    for k in 0..k_n {
        for l in 0..l_n {
            hhat.push(stats.estimator(k, l) * &z[(pilots.t[k] - 1) * l_n + l]);
        }
    }
    EstimateSample { l: l_n, h, hhat }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::AngularSpread;

    #[test]
    fn pilot_sets_are_balanced() {
        for (k, tau_p) in [(4, 4), (20, 10), (5, 2), (7, 3)] {
            let p = assign_pilots(k, tau_p, 0.1, 11, 0).unwrap();
            let sizes: Vec<usize> = (1..=tau_p).map(|t| p.users_of(t).len()).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1, "{sizes:?}");
            assert_eq!(sizes.iter().sum::<usize>(), k);
        }
        let p = assign_pilots(5, 2, 0.1, 11, 0).unwrap();
        let mut sizes: Vec<usize> = (1..=2).map(|t| p.users_of(t).len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 3]);
    }

    #[test]
    fn scalar_gamma_matches_hand_value() {
        let (p, beta, sigma2) = (0.1, 1e-9, 1e-12);
        let s = Scenario::from_beta(DMatrix::from_element(1, 1, beta), 1, AngularSpread::Uncorrelated).unwrap();
        let frame = FrameConfig::new(10, 1, 1e-5).unwrap();
        let aging = AgingProfile::uniform(&frame, 1, 0.0).unwrap();
        let pilots = PilotAssignment::new(1, vec![1], vec![p]).unwrap();
        let stats = EstimationStatistics::compute(&s, &pilots, &aging, &frame, sigma2).unwrap();
        let expect = p * beta * beta / (p * beta + sigma2);
        assert!((stats.gamma.as_ref().unwrap()[(0, 0)] / expect - 1.0).abs() < 1e-12);
        assert!((stats.q(0, 0)[(0, 0)].re / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qbar_diagonal_is_q() {
        let beta = DMatrix::from_row_slice(3, 2, &[1e-9, 2e-10, 3e-10, 5e-9, 7e-10, 1e-10]);
        let s = Scenario::from_beta(beta, 3, AngularSpread::Degrees(15.0)).unwrap();
        let frame = FrameConfig::new(20, 2, 1e-5).unwrap();
        let aging = AgingProfile::uniform(&frame, 3, 0.01).unwrap();
        let pilots = PilotAssignment::new(2, vec![1, 2, 1], vec![0.1; 3]).unwrap();
        let stats = EstimationStatistics::compute(&s, &pilots, &aging, &frame, 1e-12).unwrap();
        for k in 0..3 {
            for l in 0..2 {
                let d = stats.qbar(k, k, l).unwrap() - stats.q(k, l);
                assert!(d.norm() <= 1e-12 * stats.q(k, l).norm());
            }
        }
        assert!(stats.qbar(0, 1, 0).is_none());
        let tr = TraceStatistics::from_matrices(&s, &stats);
        // tr(Qbar_ikl) is the conjugate of tr(Qbar_kil).
        let a = tr.tr_qbar(0, 2, 1);
        let b = tr.tr_qbar(2, 0, 1);
        assert!((a - b.conj()).norm() <= 1e-12 * a.norm());
    }
}
