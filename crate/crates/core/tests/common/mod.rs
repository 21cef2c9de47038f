//! Shared test helpers: quadrature references for the special functions and
//! small deterministic systems.

#![allow(dead_code)]

use cellfree::aging::{AgingProfile, FrameConfig};
use cellfree::estimation::{EstimationStatistics, PilotAssignment, TraceStatistics};
use cellfree::scenario::{AngularSpread, Scenario};
use nalgebra::DMatrix;

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Composite Gauss-Legendre (20 points per panel) over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let part: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + 0.5 * h * xi)).sum();
        total += 0.5 * h * part;
    }
    total
}

/// `J0(x) = (1/pi) int_0^pi cos(x sin t) dt`.
pub fn j0_quadrature(x: f64) -> f64 {
    // Enough panels to resolve ~x/pi oscillations with many points each.
    let panels = 8 + (x.abs() / 2.0).ceil() as usize;
    integrate(|t| (x * t.sin()).cos(), 0.0, std::f64::consts::PI, panels) / std::f64::consts::PI
}

/// `e^x E1(x) = int_0^inf e^{-u} / (u + x) du`, after `u = e^v`.
pub fn exp_e1_quadrature(x: f64) -> f64 {
    let lo = x.ln().min(0.0) - 40.0;
    let hi = 4.5; // e^{-e^4.5} is below 1e-39
    let panels = ((hi - lo) * 4.0).ceil() as usize;
    integrate(|v| { let u = v.exp(); u * (-u).exp() / (u + x) }, lo, hi, panels)
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp()).collect()
}

/// A hand-built drop with explicit large-scale fading.
pub struct SmallSystem {
    pub scenario: Scenario,
    pub pilots: PilotAssignment,
    pub aging: AgingProfile,
    pub frame: FrameConfig,
    pub stats: EstimationStatistics,
    pub traces: TraceStatistics,
}

impl SmallSystem {
    pub fn new(beta: DMatrix<f64>, n: usize, spread: AngularSpread, tau_p: usize, t: Vec<usize>, f: f64, sigma2: f64) -> Self {
        let k = beta.nrows();
        let scenario = Scenario::from_beta(beta, n, spread).unwrap();
        let frame = FrameConfig::new(60, tau_p, 1e-5).unwrap();
        let aging = AgingProfile::uniform(&frame, k, f).unwrap();
        let pilots = PilotAssignment::new(tau_p, t, vec![0.1; k]).unwrap();
        let stats = EstimationStatistics::compute(&scenario, &pilots, &aging, &frame, sigma2).unwrap();
        let traces = TraceStatistics::from_matrices(&scenario, &stats);
        Self { scenario, pilots, aging, frame, stats, traces }
    }

    /// Three UEs on four APs; UEs 0 and 2 share a pilot.
    pub fn reference(n: usize, spread: AngularSpread, f: f64) -> Self {
        let beta = DMatrix::from_row_slice(
            3,
            4,
            &[1e-9, 2e-10, 3e-11, 8e-11, 3e-10, 5e-9, 1e-10, 2e-11, 7e-10, 1e-10, 4e-9, 6e-11],
        );
        Self::new(beta, n, spread, 2, vec![1, 2, 1], f, 1e-12)
    }
}

/// The ten-AP, four-UE drop used for closed-form/Monte Carlo agreement.
pub fn oracle_config(n: usize) -> cellfree::harness::RunConfig {
    let mut c = cellfree::harness::RunConfig::default();
    c.seed = 2024;
    c.scenario.num_aps = 10;
    c.scenario.num_ues = 4;
    c.scenario.antennas_per_ap = n;
    c.aging.tau_c = 50;
    c.aging.tau_p = 4;
    c.aging.f_d_ts = vec![0.002];
    c
}

pub fn oracle_model(n: usize) -> cellfree::model::SystemModel {
    let c = oracle_config(n);
    cellfree::model::SystemModel::build(&c.model_params().unwrap(), c.seed, 0).unwrap()
}
