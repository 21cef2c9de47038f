//! Monte Carlo oracle.
//!
//! Samples channel trajectories, pilot signals and MMSE estimates, then
//! estimates empirically every expectation that the closed forms evaluate
//! analytically. Trials run in blocks of [`BLOCK`] on the rayon pool; each
//! trial has its own RNG stream and block sums are reduced in block order,
//! so results are bit-identical for any number of worker threads.
//! Standard errors come from a delete-one-block jackknife.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::aging::{AgingProfile, FrameConfig};
use crate::downlink::{coherent_sinr, noncoherent_sinr, DownlinkPowerControl};
use crate::error::{Error, Result};
use crate::estimation::{ChannelSampler, EstimationStatistics, PilotAssignment, TraceStatistics};
use crate::linalg::{inner, quadratic_form, standard_complex_normal, CMatrix, CVector};
use crate::model::SystemModel;
use crate::rng::{stream, Purpose};
use crate::scenario::Scenario;
use crate::uplink::{
    lsfd_weights, mf_weights, smallcell_rate_n1, uplink_sinr, Scheme, UplinkPowerControl,
};

/// Trials per jackknife block.
pub const BLOCK: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn rel_error(&self, reference: f64) -> f64 {
        ((self.value - reference) / reference).abs()
    }

    /// Distance from `reference` in standard errors.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference).abs() / self.stderr
    }
}

/// A closed-form value next to its Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermEstimate {
    pub closed_form: f64,
    pub empirical: Estimate,
}

impl TermEstimate {
    pub fn rel_error(&self) -> f64 {
        self.empirical.rel_error(self.closed_form)
    }

    pub fn z_score(&self) -> f64 {
        self.empirical.z_score(self.closed_form)
    }
}

/// Per-block sums of per-trial statistic vectors.
#[derive(Debug, Clone)]
pub struct Moments {
    width: usize,
    blocks: Vec<(usize, Vec<f64>)>,
}

impl Moments {
    /// Runs `trials` trials; `trial` fills a zeroed buffer of `width`
    /// statistics from the given RNG.
    pub fn collect<F>(trials: usize, width: usize, seed: u64, drop: u64, trial: F) -> Result<Self>
    where
        F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
    {
        if trials == 0 {
            return Err(Error::InvalidParameter("need at least one trial".into()));
        }
        // Very short runs still get a usable jackknife.
        let block = if trials >= 2 * BLOCK { BLOCK } else { 1 };
        let starts: Vec<usize> = (0..trials).step_by(block).collect();
        let blocks = starts
            .par_iter()
            .map(|&start| {
                let end = (start + block).min(trials);
                let mut sum = vec![0.0; width];
                let mut buf = vec![0.0; width];
                for t in start..end {
                    buf.iter_mut().for_each(|x| *x = 0.0);
                    let mut rng = stream(seed, drop, t as u64, Purpose::Channels);
                    trial(&mut rng, &mut buf);
                    for (s, b) in sum.iter_mut().zip(&buf) {
                        *s += b;
                    }
                }
                (end - start, sum)
            })
            .collect();
        Ok(Self { width, blocks })
    }

    pub fn trials(&self) -> usize {
        self.blocks.iter().map(|(n, _)| n).sum()
    }

    fn totals(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.width];
        for (_, sum) in &self.blocks {
            for (t, s) in total.iter_mut().zip(sum) {
                *t += s;
            }
        }
        total
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.trials() as f64;
        self.totals().into_iter().map(|t| t / n).collect()
    }

    /// `g` of the sample means, with a delete-one-block jackknife error.
    pub fn estimate(&self, g: impl Fn(&[f64]) -> f64) -> Estimate {
        let total = self.totals();
        let n = self.trials();
        let value = g(&total.iter().map(|t| t / n as f64).collect::<Vec<_>>());
        let b = self.blocks.len();
        if b < 2 {
            return Estimate { value, stderr: f64::NAN };
        }
        let mut leave_out = vec![0.0; self.width];
        let loo: Vec<f64> = self
            .blocks
            .iter()
            .map(|(m, sum)| {
                let rest = (n - m) as f64;
                for ((x, t), s) in leave_out.iter_mut().zip(&total).zip(sum) {
                    *x = (t - s) / rest;
                }
                g(&leave_out)
            })
            .collect();
        let avg = loo.iter().sum::<f64>() / b as f64;
        let var = loo.iter().map(|x| (x - avg).powi(2)).sum::<f64>() * (b - 1) as f64 / b as f64;
        Estimate { value, stderr: var.sqrt() }
    }
}

/// Channel realisations of one trial, anchored at the first data instant.
#[derive(Debug, Clone)]
pub struct ChannelTrajectory {
    pub l: usize,
    /// Data instants (1-based) that were sampled.
    pub instants: Vec<usize>,
    /// `h_kl[lambda]` at `k * L + l`.
    pub anchor: Vec<CVector>,
    /// `h_kl[t_k]`, the channel during UE k's pilot.
    pub pilot: Vec<CVector>,
    /// `u_kl[n]` per sampled instant.
    pub innovation: Vec<Vec<CVector>>,
    /// `h_kl[n] = rho_k[n - lambda] h_kl[lambda] + rho_bar_k[n - lambda] u_kl[n]`.
    pub data: Vec<Vec<CVector>>,
}

impl ChannelTrajectory {
    #[inline]
    pub fn anchor(&self, k: usize, l: usize) -> &CVector {
        &self.anchor[k * self.l + l]
    }

    #[inline]
    pub fn pilot(&self, k: usize, l: usize) -> &CVector {
        &self.pilot[k * self.l + l]
    }

    /// Channel at the `j`-th sampled instant.
    #[inline]
    pub fn data(&self, j: usize, k: usize, l: usize) -> &CVector {
        &self.data[j][k * self.l + l]
    }

    #[inline]
    pub fn innovation(&self, j: usize, k: usize, l: usize) -> &CVector {
        &self.innovation[j][k * self.l + l]
    }
}

fn check_instants(frame: &FrameConfig, instants: &[usize]) -> Result<()> {
    match instants.iter().find(|&&n| n < frame.lambda() || n > frame.tau_c) {
        Some(n) => Err(Error::InvalidParameter(format!(
            "instant {n} outside the data phase {}..={}",
            frame.lambda(),
            frame.tau_c
        ))),
        None => Ok(()),
    }
}

/// Draws `h[lambda] ~ CN(0, R)`, the pilot-instant channels with fresh
/// innovations, and the channels at the requested data instants with one
/// independent innovation per instant.
pub fn sample_trajectory<R: Rng + ?Sized>(
    sampler: &ChannelSampler,
    pilots: &PilotAssignment,
    aging: &AgingProfile,
    frame: &FrameConfig,
    instants: &[usize],
    rng: &mut R,
) -> Result<ChannelTrajectory> {
    check_instants(frame, instants)?;
    Ok(trajectory_unchecked(sampler, pilots, aging, frame, instants, rng))
}

fn trajectory_unchecked<R: Rng + ?Sized>(
    sampler: &ChannelSampler,
    pilots: &PilotAssignment,
    aging: &AgingProfile,
    frame: &FrameConfig,
    instants: &[usize],
    rng: &mut R,
) -> ChannelTrajectory {
    let k_n = pilots.num_ues();
    let l_n = sampler.num_aps();
    let lambda = frame.lambda();
    let mut anchor = Vec::with_capacity(k_n * l_n);
    let mut pilot = Vec::with_capacity(k_n * l_n);
    for k in 0..k_n {
        let lag = lambda - pilots.t[k];
        let (r, rb) = (aging.rho(k, lag), aging.rho_bar(k, lag));
        for l in 0..l_n {
            let h = sampler.draw(k, l, rng);
            let f = sampler.draw(k, l, rng);
            pilot.push(h.scale(r) + f.scale(rb));
            anchor.push(h);
        }
    }
    let mut innovation = Vec::with_capacity(instants.len());
    let mut data = Vec::with_capacity(instants.len());
    for &n in instants {
        let lag = n - lambda;
        let mut u_n = Vec::with_capacity(k_n * l_n);
        let mut h_n = Vec::with_capacity(k_n * l_n);
        for k in 0..k_n {
            let (r, rb) = (aging.rho(k, lag), aging.rho_bar(k, lag));
            for l in 0..l_n {
                let u = sampler.draw(k, l, rng);
                h_n.push(anchor[k * l_n + l].scale(r) + u.scale(rb));
                u_n.push(u);
            }
        }
        innovation.push(u_n);
        data.push(h_n);
    }
    ChannelTrajectory { l: l_n, instants: instants.to_vec(), anchor, pilot, innovation, data }
}

/// Trajectory of one (UE, AP) pair anchored at instant 0:
/// `h[n] = rho[n] h[0] + rho_bar[n] g[n]`. Returns `h[0]` and `h[n]` for
/// each requested `n`.
pub fn sample_zero_anchored<R: Rng + ?Sized>(
    sampler: &ChannelSampler,
    aging: &AgingProfile,
    k: usize,
    l: usize,
    instants: &[usize],
    rng: &mut R,
) -> (CVector, Vec<CVector>) {
    let h0 = sampler.draw(k, l, rng);
    let hn = instants
        .iter()
        .map(|&n| h0.scale(aging.rho(k, n)) + sampler.draw(k, l, rng).scale(aging.rho_bar(k, n)))
        .collect();
    (h0, hn)
}

/// Forms the received pilot signals of a trajectory and applies the MMSE
/// estimators. Returns `hhat_kl[lambda]` at `k * L + l`.
pub fn estimate_channels<R: Rng + ?Sized>(
    trajectory: &ChannelTrajectory,
    pilots: &PilotAssignment,
    stats: &EstimationStatistics,
    rng: &mut R,
) -> Vec<CVector> {
    let (k_n, l_n, n) = (stats.k, stats.l, stats.n);
    let noise_sd = stats.sigma2.sqrt();
    let mut z: Vec<CVector> = (0..pilots.tau_p * l_n)
        .map(|_| standard_complex_normal(rng, n).scale(noise_sd))
        .collect();
    for i in 0..k_n {
        let sp = pilots.p[i].sqrt();
        for l in 0..l_n {
            z[(pilots.t[i] - 1) * l_n + l] += trajectory.pilot(i, l).scale(sp);
        }
    }
    let mut hhat = Vec::with_capacity(k_n * l_n);
    for k in 0..k_n {
        for l in 0..l_n {
            hhat.push(stats.estimator(k, l) * &z[(pilots.t[k] - 1) * l_n + l]);
        }
    }
    hhat
}

/// Everything the oracle reads from one drop.
#[derive(Debug, Clone, Copy)]
pub struct OracleInputs<'a> {
    pub scenario: &'a Scenario,
    pub pilots: &'a PilotAssignment,
    pub aging: &'a AgingProfile,
    pub frame: &'a FrameConfig,
    pub stats: &'a EstimationStatistics,
    pub traces: &'a TraceStatistics,
}

impl<'a> From<&'a SystemModel> for OracleInputs<'a> {
    fn from(m: &'a SystemModel) -> Self {
        Self {
            scenario: &m.scenario,
            pilots: &m.pilots,
            aging: &m.aging,
            frame: &m.params.frame,
            stats: &m.stats,
            traces: &m.traces,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSettings {
    pub trials: usize,
    pub seed: u64,
    pub drop: u64,
    /// Data instants (1-based) at which moments are estimated.
    pub instants: Vec<usize>,
}

impl OracleSettings {
    /// Instants `lambda + offset` for each offset.
    pub fn at_offsets(frame: &FrameConfig, offsets: &[usize], trials: usize, seed: u64, drop: u64) -> Self {
        Self {
            trials,
            seed,
            drop,
            instants: offsets.iter().map(|o| frame.lambda() + o).collect(),
        }
    }
}

/// Uplink moments of UE `k` at one instant.
#[derive(Debug, Clone, Serialize)]
pub struct UplinkOracleRow {
    pub k: usize,
    pub n: usize,
    /// Desired signal over the mean effective channel.
    pub ds: TermEstimate,
    /// Beamforming uncertainty.
    pub bu: TermEstimate,
    /// Channel aging.
    pub ca: TermEstimate,
    /// Interference from each other UE `(i, term)`.
    pub ui: Vec<(usize, TermEstimate)>,
    /// Coherent (mean) part of each other UE's interference.
    pub contamination: Vec<(usize, TermEstimate)>,
    pub ns: TermEstimate,
    pub sinr: TermEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct UplinkOracle {
    pub scheme: Scheme,
    pub trials: usize,
    pub rows: Vec<UplinkOracleRow>,
}

/// Empirical uplink SINR terms with the CPU weights of `scheme` (LSFD or
/// MF) held fixed across trials.
pub fn uplink_oracle(
    inp: OracleInputs<'_>,
    pc: &UplinkPowerControl,
    scheme: Scheme,
    settings: &OracleSettings,
) -> Result<UplinkOracle> {
    check_instants(inp.frame, &settings.instants)?;
    let (k_n, l_n) = (inp.stats.k, inp.stats.l);
    let sigma2 = inp.stats.sigma2;
    let instants = &settings.instants;
    let jn = instants.len();
    let mut weights = Vec::with_capacity(k_n * jn);
    for k in 0..k_n {
        for &n in instants {
            weights.push(match scheme {
                Scheme::Lsfd => lsfd_weights(inp.traces, inp.aging, inp.frame, pc, sigma2, k, n)?,
                Scheme::Mf => mf_weights(l_n),
                other => return Err(Error::InvalidParameter(format!("`{other}` is not an uplink CPU scheme"))),
            });
        }
    }
    let sampler = ChannelSampler::new(inp.scenario)?;
    // Per (k, j): Re x, Im x, |x|^2, |y|^2, ns, then (Re g, Im g, |g|^2) per UE.
    let w = 5 + 3 * k_n;
    let moments = Moments::collect(settings.trials, k_n * jn * w, settings.seed, settings.drop, |rng, buf| {
        let traj = trajectory_unchecked(&sampler, inp.pilots, inp.aging, inp.frame, instants, rng);
        let hhat = estimate_channels(&traj, inp.pilots, inp.stats, rng);
        for k in 0..k_n {
            for j in 0..jn {
                let a = &weights[k * jn + j];
                let out = &mut buf[(k * jn + j) * w..(k * jn + j + 1) * w];
                let mut x = Complex64::new(0.0, 0.0);
                let mut y = Complex64::new(0.0, 0.0);
                let mut ns = 0.0;
                for l in 0..l_n {
                    let e = &hhat[k * l_n + l];
                    x += a[l].conj() * inner(e, traj.anchor(k, l));
                    y += a[l].conj() * inner(e, traj.innovation(j, k, l));
                    ns += a[l].norm_sqr() * e.norm_squared();
                }
                out[0] = x.re;
                out[1] = x.im;
                out[2] = x.norm_sqr();
                out[3] = y.norm_sqr();
                out[4] = sigma2 * ns;
                for i in 0..k_n {
                    let g: Complex64 = (0..l_n)
                        .map(|l| a[l].conj() * inner(&hhat[k * l_n + l], traj.data(j, i, l)))
                        .sum();
                    out[5 + 3 * i] = g.re;
                    out[6 + 3 * i] = g.im;
                    out[7 + 3 * i] = g.norm_sqr();
                }
            }
        }
    })?;

    let p = pc.p_u;
    let tr = inp.traces;
    let lambda = inp.frame.lambda();
    let mut rows = Vec::with_capacity(k_n * jn);
    for k in 0..k_n {
        for (j, &n) in instants.iter().enumerate() {
            let a = &weights[k * jn + j];
            let base = (k * jn + j) * w;
            let lag = n - lambda;
            let (rho2, rhob2) = (inp.aging.rho(k, lag).powi(2), inp.aging.rho_bar(k, lag).powi(2));
            let pe = p * pc.eta[k];
            let signal: Complex64 = (0..l_n).map(|l| a[l].conj() * tr.tr_q(k, l)).sum();
            let qr: f64 = (0..l_n).map(|l| a[l].norm_sqr() * tr.tr_qr(k, k, l)).sum();
            let ds_of = move |m: &[f64]| pe * rho2 * (m[base].powi(2) + m[base + 1].powi(2));
            let bu_of = move |m: &[f64]| pe * rho2 * (m[base + 2] - m[base].powi(2) - m[base + 1].powi(2));
            let ca_of = move |m: &[f64]| pe * rhob2 * m[base + 3];
            let ns_of = move |m: &[f64]| m[base + 4];
            let ui_of = |i: usize| {
                let pi = p * pc.eta[i];
                move |m: &[f64]| pi * m[base + 7 + 3 * i]
            };
            let mut ui = Vec::new();
            let mut contamination = Vec::new();
            for i in (0..k_n).filter(|&i| i != k) {
                let rho2_i = inp.aging.rho(i, lag).powi(2);
                let pi = p * pc.eta[i];
                let trace_part: f64 = (0..l_n).map(|l| a[l].norm_sqr() * tr.tr_qr(k, i, l)).sum();
                let mean_part = if inp.pilots.shares(k, i) {
                    let c: Complex64 = (0..l_n).map(|l| a[l].conj() * tr.tr_qbar(k, i, l)).sum();
                    pi * rho2_i * c.norm_sqr()
                } else {
                    0.0
                };
                ui.push((i, TermEstimate { closed_form: pi * trace_part + mean_part, empirical: moments.estimate(ui_of(i)) }));
                let gi = 5 + 3 * i;
                contamination.push((
                    i,
                    TermEstimate {
                        closed_form: mean_part,
                        empirical: moments.estimate(|m| pi * (m[base + gi].powi(2) + m[base + gi + 1].powi(2))),
                    },
                ));
            }
            let others: Vec<usize> = (0..k_n).filter(|&i| i != k).collect();
            let sinr_of = |m: &[f64]| {
                let interference: f64 = others.iter().map(|&i| ui_of(i)(m)).sum();
                ds_of(m) / (bu_of(m) + ca_of(m) + interference + ns_of(m))
            };
            let noise: f64 = (0..l_n).map(|l| a[l].norm_sqr() * tr.tr_q(k, l)).sum();
            rows.push(UplinkOracleRow {
                k,
                n,
                ds: TermEstimate { closed_form: pe * rho2 * signal.norm_sqr(), empirical: moments.estimate(ds_of) },
                bu: TermEstimate { closed_form: pe * rho2 * qr, empirical: moments.estimate(bu_of) },
                ca: TermEstimate { closed_form: pe * rhob2 * qr, empirical: moments.estimate(ca_of) },
                ui,
                contamination,
                ns: TermEstimate { closed_form: sigma2 * noise, empirical: moments.estimate(ns_of) },
                sinr: TermEstimate {
                    closed_form: uplink_sinr(tr, inp.aging, inp.frame, pc, sigma2, k, n, a)?,
                    empirical: moments.estimate(sinr_of),
                },
            });
        }
    }
    Ok(UplinkOracle { scheme, trials: moments.trials(), rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct DownlinkOracleRow {
    pub k: usize,
    pub n: usize,
    pub coherent: TermEstimate,
    /// Non-coherent SINR recovered from the per-AP SINRs via
    /// `prod_l (1 + zeta_kl) - 1`.
    pub noncoherent: TermEstimate,
    /// `sum_l log2(1 + zeta_kl)` against `log2(1 + SINR_nc)`.
    pub noncoherent_rate: TermEstimate,
    /// Per-AP SINRs under successive cancellation in AP order.
    pub zeta: Vec<Estimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DownlinkOracle {
    pub trials: usize,
    pub rows: Vec<DownlinkOracleRow>,
    /// `E|x_l|^2` per AP against the budget `p_d`.
    pub ap_power: Vec<TermEstimate>,
}

/// Coherent and non-coherent downlink moments with maximum-ratio precoding.
pub fn downlink_oracle(
    inp: OracleInputs<'_>,
    dpc: &DownlinkPowerControl,
    sigma2: f64,
    settings: &OracleSettings,
) -> Result<DownlinkOracle> {
    check_instants(inp.frame, &settings.instants)?;
    let (k_n, l_n) = (inp.stats.k, inp.stats.l);
    let instants = &settings.instants;
    let jn = instants.len();
    let sqrt_mu = dpc.mu.map(f64::sqrt);
    let sampler = ChannelSampler::new(inp.scenario)?;
    // Per (k, j): Re/Im e_kk, |e_ki|^2 per UE, Re/Im of the per-AP gains, T.
    let w = 2 + k_n + 2 * l_n + 1;
    let power_base = k_n * jn * w;
    let moments = Moments::collect(settings.trials, power_base + l_n, settings.seed, settings.drop, |rng, buf| {
        let traj = trajectory_unchecked(&sampler, inp.pilots, inp.aging, inp.frame, instants, rng);
        let hhat = estimate_channels(&traj, inp.pilots, inp.stats, rng);
        for j in 0..jn {
            for k in 0..k_n {
                let out = &mut buf[(k * jn + j) * w..(k * jn + j + 1) * w];
                // g[i * L + l] = h_kl[n]^H hhat_il
                let g: Vec<Complex64> = (0..k_n * l_n)
                    .map(|il| inner(traj.data(j, k, il % l_n), &hhat[il]))
                    .collect();
                let mut t = 0.0;
                for i in 0..k_n {
                    let mut e = Complex64::new(0.0, 0.0);
                    for l in 0..l_n {
                        e += sqrt_mu[(i, l)] * g[i * l_n + l];
                        t += dpc.mu[(i, l)] * g[i * l_n + l].norm_sqr();
                    }
                    if i == k {
                        out[0] = e.re;
                        out[1] = e.im;
                    }
                    out[2 + i] = e.norm_sqr();
                }
                for l in 0..l_n {
                    out[2 + k_n + 2 * l] = g[k * l_n + l].re;
                    out[3 + k_n + 2 * l] = g[k * l_n + l].im;
                }
                out[w - 1] = t;
            }
        }
        for l in 0..l_n {
            buf[power_base + l] = dpc.p_d
                * (0..k_n).map(|i| dpc.mu[(i, l)] * hhat[i * l_n + l].norm_squared()).sum::<f64>();
        }
    })?;

    let p = dpc.p_d;
    let lambda = inp.frame.lambda();
    let mut rows = Vec::with_capacity(k_n * jn);
    for k in 0..k_n {
        for (j, &n) in instants.iter().enumerate() {
            let base = (k * jn + j) * w;
            let rho2 = inp.aging.rho(k, n - lambda).powi(2);
            let coherent_of = |m: &[f64]| {
                let s = m[base].powi(2) + m[base + 1].powi(2);
                let total: f64 = (0..k_n).map(|i| m[base + 2 + i]).sum();
                p * s / (p * total - p * s + sigma2)
            };
            // zeta_kl with cancellation of APs 0..l-1.
            let zeta_of = |m: &[f64]| -> Vec<f64> {
                let t = m[base + w - 1];
                let mut cancelled = 0.0;
                (0..l_n)
                    .map(|l| {
                        let g = dpc.mu[(k, l)]
                            * (m[base + 2 + k_n + 2 * l].powi(2) + m[base + 3 + k_n + 2 * l].powi(2));
                        cancelled += g;
                        p * g / (p * t - p * cancelled + sigma2)
                    })
                    .collect()
            };
            let nc_closed = noncoherent_sinr(inp.traces, dpc, sigma2, k, rho2);
            rows.push(DownlinkOracleRow {
                k,
                n,
                coherent: TermEstimate {
                    closed_form: coherent_sinr(inp.traces, dpc, sigma2, k, rho2),
                    empirical: moments.estimate(coherent_of),
                },
                noncoherent: TermEstimate {
                    closed_form: nc_closed,
                    empirical: moments.estimate(|m| zeta_of(m).iter().map(|z| 1.0 + z).product::<f64>() - 1.0),
                },
                noncoherent_rate: TermEstimate {
                    closed_form: nc_closed.ln_1p() / std::f64::consts::LN_2,
                    empirical: moments.estimate(|m| zeta_of(m).iter().map(|z| z.ln_1p()).sum::<f64>() / std::f64::consts::LN_2),
                },
                zeta: (0..l_n).map(|l| moments.estimate(|m| zeta_of(m)[l])).collect(),
            });
        }
    }
    let load = dpc.load(inp.traces);
    let ap_power = (0..l_n)
        .map(|l| TermEstimate {
            closed_form: p * load[l],
            empirical: moments.estimate(|m| m[power_base + l]),
        })
        .collect();
    Ok(DownlinkOracle { trials: moments.trials(), rows, ap_power })
}

/// Small-cell quantities of UE `k` served by AP `l` at instant `n`.
#[derive(Debug, Clone, Serialize)]
pub struct SmallCellOracleEntry {
    pub k: usize,
    pub l: usize,
    pub n: usize,
    /// `E log2(1 + SINR)` with the SINR that conditions on every UE's
    /// estimate at AP `l` (any `N`).
    pub general: Estimate,
    /// Single antenna only: the rate conditioned on the served UE's
    /// estimate, against the exponential-integral closed form.
    pub conditional: Option<TermEstimate>,
    /// Single antenna only: `E|d|^2` of the effective interference-plus-noise.
    pub interference_power: Option<TermEstimate>,
    /// Single antenna only: `E{|d|^2 |hhat|^2}`.
    pub interference_weighted: Option<TermEstimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallCellOracle {
    pub trials: usize,
    pub entries: Vec<SmallCellOracleEntry>,
}

/// Small-cell rates per (UE, AP, instant), by sampling estimates.
pub fn smallcell_oracle(
    inp: OracleInputs<'_>,
    pc: &UplinkPowerControl,
    settings: &OracleSettings,
) -> Result<SmallCellOracle> {
    check_instants(inp.frame, &settings.instants)?;
    let (k_n, l_n, n_ant) = (inp.stats.k, inp.stats.l, inp.stats.n);
    let single = n_ant == 1;
    let sigma2 = inp.stats.sigma2;
    let p = pc.p_u;
    let instants = &settings.instants;
    let jn = instants.len();
    let lambda = inp.frame.lambda();
    let rho2: Vec<Vec<f64>> = instants
        .iter()
        .map(|&n| (0..k_n).map(|i| inp.aging.rho(i, n - lambda).powi(2)).collect())
        .collect();
    // Covariance of the unknown part of the received signal, per (l, j).
    let unknown: Vec<CMatrix> = (0..l_n)
        .flat_map(|l| {
            let rho2 = &rho2;
            (0..jn).map(move |j| {
                let mut c = CMatrix::from_diagonal_element(n_ant, n_ant, Complex64::new(sigma2, 0.0));
                for i in 0..k_n {
                    c += (inp.scenario.r(i, l) - inp.stats.q(i, l).scale(rho2[j][i])).scale(p * pc.eta[i]);
                }
                c
            })
        })
        .collect();
    // Single antenna: the scalar D_kl per instant.
    let d_scalar = |k: usize, l: usize, j: usize| -> f64 {
        let total: f64 = (0..k_n).map(|i| pc.eta[i] * inp.scenario.beta(i, l)).sum();
        let known: f64 = inp
            .pilots
            .sharing(k)
            .iter()
            .map(|&i| rho2[j][i] * pc.eta[i] * inp.traces.tr_q(i, l))
            .sum();
        p * total - p * known + sigma2
    };
    let d_table: Vec<f64> = if single {
        (0..k_n * l_n * jn).map(|x| d_scalar(x / (l_n * jn), (x / jn) % l_n, x % jn)).collect()
    } else {
        Vec::new()
    };
    let w = if single { 4 } else { 1 };
    let sampler = ChannelSampler::new(inp.scenario)?;
    let moments = Moments::collect(settings.trials, k_n * l_n * jn * w, settings.seed, settings.drop, |rng, buf| {
        let traj = trajectory_unchecked(&sampler, inp.pilots, inp.aging, inp.frame, instants, rng);
        let hhat = estimate_channels(&traj, inp.pilots, inp.stats, rng);
        for k in 0..k_n {
            for l in 0..l_n {
                let e = &hhat[k * l_n + l];
                let e2 = e.norm_squared();
                for j in 0..jn {
                    let out = &mut buf[((k * l_n + l) * jn + j) * w..((k * l_n + l) * jn + j + 1) * w];
                    let cross: f64 = (0..k_n)
                        .filter(|&i| i != k)
                        .map(|i| rho2[j][i] * p * pc.eta[i] * inner(e, &hhat[i * l_n + l]).norm_sqr())
                        .sum();
                    let q = quadratic_form(e, &unknown[l * jn + j]);
                    out[0] = (rho2[j][k] * p * pc.eta[k] * e2 * e2 / (cross + q)).ln_1p();
                    if single {
                        let h = |i: usize| traj.data(j, i, l)[0];
                        let copilot: f64 = inp
                            .pilots
                            .sharing(k)
                            .iter()
                            .filter(|&&i| i != k)
                            .map(|&i| rho2[j][i] * p * pc.eta[i] * hhat[i * l_n + l][0].norm_sqr())
                            .sum();
                        let d = d_table[(k * l_n + l) * jn + j];
                        out[1] = (rho2[j][k] * p * pc.eta[k] * e2 / (copilot + d)).ln_1p();
                        let own = h(k) - e[0].scale(rho2[j][k].sqrt());
                        let mut dd = p * pc.eta[k] * own.norm_sqr() + sigma2;
                        for i in (0..k_n).filter(|&i| i != k) {
                            dd += p * pc.eta[i] * h(i).norm_sqr();
                        }
                        out[2] = dd;
                        out[3] = dd * e2;
                    }
                }
            }
        }
    })?;

    let ln2 = std::f64::consts::LN_2;
    let mut entries = Vec::with_capacity(k_n * l_n * jn);
    for k in 0..k_n {
        for l in 0..l_n {
            for (j, &n) in instants.iter().enumerate() {
                let base = ((k * l_n + l) * jn + j) * w;
                let general = moments.estimate(|m| m[base] / ln2);
                let (mut conditional, mut power, mut weighted) = (None, None, None);
                if single {
                    let lag = n - lambda;
                    let gamma = inp.traces.tr_q(k, l);
                    let d = d_table[(k * l_n + l) * jn + j];
                    let alpha: f64 = inp
                        .pilots
                        .sharing(k)
                        .iter()
                        .filter(|&&i| i != k)
                        .map(|&i| rho2[j][i] * p * pc.eta[i] * inp.traces.tr_q(i, l))
                        .sum::<f64>()
                        / gamma;
                    conditional = Some(TermEstimate {
                        closed_form: smallcell_rate_n1(
                            inp.scenario,
                            inp.traces,
                            inp.pilots,
                            inp.aging,
                            inp.frame,
                            pc,
                            sigma2,
                            k,
                            l,
                            lag,
                        ),
                        empirical: moments.estimate(|m| m[base + 1] / ln2),
                    });
                    power = Some(TermEstimate {
                        closed_form: alpha * gamma + d,
                        empirical: moments.estimate(|m| m[base + 2]),
                    });
                    weighted = Some(TermEstimate {
                        closed_form: 2.0 * alpha * gamma * gamma + d * gamma,
                        empirical: moments.estimate(|m| m[base + 3]),
                    });
                }
                entries.push(SmallCellOracleEntry {
                    k,
                    l,
                    n,
                    general,
                    conditional,
                    interference_power: power,
                    interference_weighted: weighted,
                });
            }
        }
    }
    Ok(SmallCellOracle { trials: moments.trials(), entries })
}

/// One line of the oracle comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub quantity: String,
    pub k: usize,
    pub l: Option<usize>,
    pub n: usize,
    pub closed_form: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub rel_error: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// Pass rule for report rows: a row agrees when it is within `rel_tol`
/// relative error or within `z_tol` standard errors of its closed form.
/// The default `z_tol` leaves room for the many comparisons in one report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleTolerance {
    pub rel_tol: f64,
    pub z_tol: f64,
}

impl Default for OracleTolerance {
    fn default() -> Self {
        Self { rel_tol: 0.02, z_tol: 4.0 }
    }
}

fn row(quantity: String, k: usize, l: Option<usize>, n: usize, t: &TermEstimate, tol: OracleTolerance) -> OracleRow {
    let rel_error = t.rel_error();
    let z_score = t.z_score();
    // Exact agreement (e.g. a term that vanishes at the anchor instant).
    let exact = t.closed_form == t.empirical.value;
    let pass = exact || rel_error <= tol.rel_tol || z_score <= tol.z_tol;
    OracleRow {
        quantity,
        k,
        l,
        n,
        closed_form: t.closed_form,
        empirical: t.empirical.value,
        stderr: t.empirical.stderr,
        rel_error,
        z_score,
        pass,
    }
}

impl UplinkOracle {
    pub fn report(&self, tol: OracleTolerance) -> Vec<OracleRow> {
        let s = self.scheme.name();
        let mut out = Vec::new();
        for r in &self.rows {
            out.push(row(format!("{s}_sinr"), r.k, None, r.n, &r.sinr, tol));
            for (name, t) in [("ds", &r.ds), ("bu", &r.bu), ("ca", &r.ca), ("ns", &r.ns)] {
                out.push(row(format!("{s}_{name}"), r.k, None, r.n, t, tol));
            }
            for (i, t) in &r.ui {
                out.push(row(format!("{s}_ui_{i}"), r.k, None, r.n, t, tol));
            }
            for (i, t) in &r.contamination {
                out.push(row(format!("{s}_pc_{i}"), r.k, None, r.n, t, tol));
            }
        }
        out
    }
}

impl DownlinkOracle {
    pub fn report(&self, tol: OracleTolerance) -> Vec<OracleRow> {
        let mut out = Vec::new();
        for r in &self.rows {
            out.push(row("coherent_sinr".into(), r.k, None, r.n, &r.coherent, tol));
            out.push(row("noncoherent_sinr".into(), r.k, None, r.n, &r.noncoherent, tol));
            out.push(row("noncoherent_rate".into(), r.k, None, r.n, &r.noncoherent_rate, tol));
        }
        for (l, t) in self.ap_power.iter().enumerate() {
            out.push(row("ap_power".into(), 0, Some(l), 0, t, tol));
        }
        out
    }
}

impl SmallCellOracle {
    pub fn report(&self, tol: OracleTolerance) -> Vec<OracleRow> {
        let mut out = Vec::new();
        for e in &self.entries {
            if let Some(t) = &e.conditional {
                out.push(row("sc_rate".into(), e.k, Some(e.l), e.n, t, tol));
            }
            if let Some(t) = &e.interference_power {
                out.push(row("sc_interference".into(), e.k, Some(e.l), e.n, t, tol));
            }
            if let Some(t) = &e.interference_weighted {
                out.push(row("sc_interference_weighted".into(), e.k, Some(e.l), e.n, t, tol));
            }
        }
        out
    }

    /// Per-UE rates at the strongest AP only.
    pub fn at_serving(&self, beta: &DMatrix<f64>) -> Vec<&SmallCellOracleEntry> {
        self.entries
            .iter()
            .filter(|e| {
                let row = beta.row(e.k);
                (0..row.len()).all(|l| row[l] <= row[e.l])
            })
            .collect()
    }
}
