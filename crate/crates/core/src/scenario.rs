//! Network drops: AP/UE placement, three-slope pathloss, correlated
//! shadowing and per-pair spatial correlation matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, CMatrix};
use crate::rng::{stream, Purpose};

/// Shadowing standard deviation in dB.
pub const SHADOWING_STD_DB: f64 = 8.0;
/// Decorrelation distance (m) of the shadowing model.
pub const SHADOWING_DECORRELATION_M: f64 = 100.0;
/// Relative tolerance for negative eigenvalues before clamping turns into an error.
pub const PSD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    pub l: usize,
    pub k: usize,
    pub n: usize,
}

impl SystemDims {
    pub fn new(l: usize, k: usize, n: usize) -> Result<Self> {
        if l == 0 || k == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "dimensions must be positive (L = {l}, K = {k}, N = {n})"
            )));
        }
        Ok(Self { l, k, n })
    }
}

/// Angular spread used to build the correlation matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngularSpread {
    Degrees(f64),
    /// `R_kl = beta_kl I_N` exactly.
    Uncorrelated,
}

#[derive(Debug, Clone)]
pub struct ScenarioGeometry {
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    /// K x L UE-AP distances.
    pub d_kl: DMatrix<f64>,
    /// K x K UE-UE distances.
    pub delta_ki: DMatrix<f64>,
    /// L x L AP-AP distances.
    pub upsilon_lj: DMatrix<f64>,
    pub area_side: f64,
}

#[derive(Debug, Clone)]
pub struct LargeScaleFading {
    /// K x L linear gains.
    pub beta: DMatrix<f64>,
    /// K x L shadowing realisation in dB (zero where no shadowing applies).
    pub shadowing_db: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SpatialCorrelation {
    /// Row-major over (k, l): index `k * L + l`.
    pub r: Vec<CMatrix>,
    pub spread: AngularSpread,
    /// K x L nominal angles of arrival (rad).
    pub nominal_angle: DMatrix<f64>,
    pub l: usize,
}

impl SpatialCorrelation {
    #[inline]
    pub fn get(&self, k: usize, l: usize) -> &CMatrix {
        &self.r[k * self.l + l]
    }

    pub fn is_uncorrelated(&self) -> bool {
        matches!(self.spread, AngularSpread::Uncorrelated)
    }
}

/// Everything describing one drop.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub dims: SystemDims,
    pub geometry: ScenarioGeometry,
    pub lsf: LargeScaleFading,
    pub correlation: SpatialCorrelation,
}

/// Three-slope pathloss in dB (negative: a gain), without shadowing.
pub fn pathloss_db(d: f64) -> f64 {
    if d < 10.0 {
        -81.2
    } else if d < 50.0 {
        -61.2 - 20.0 * d.log10()
    } else {
        -35.7 - 35.0 * d.log10()
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl ScenarioGeometry {
    /// Builds distance tables from explicit positions.
    pub fn from_positions(
        ap_positions: Vec<[f64; 2]>,
        ue_positions: Vec<[f64; 2]>,
        area_side: f64,
    ) -> Result<Self> {
        if !(area_side > 0.0) || !area_side.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "area side must be positive, got {area_side}"
            )));
        }
        let (l, k) = (ap_positions.len(), ue_positions.len());
        if l == 0 || k == 0 {
            return Err(Error::InvalidParameter("need at least one AP and one UE".into()));
        }
        let d_kl = DMatrix::from_fn(k, l, |i, j| distance(ue_positions[i], ap_positions[j]));
        let delta_ki = DMatrix::from_fn(k, k, |i, j| distance(ue_positions[i], ue_positions[j]));
        let upsilon_lj = DMatrix::from_fn(l, l, |i, j| distance(ap_positions[i], ap_positions[j]));
        Ok(Self {
            ap_positions,
            ue_positions,
            d_kl,
            delta_ki,
            upsilon_lj,
            area_side,
        })
    }
}

/// Covariance `E{F_kl F_ij}` between two shadowing terms.
pub fn shadowing_cross_covariance(delta_ki: f64, upsilon_lj: f64) -> f64 {
    let half = 0.5 * SHADOWING_STD_DB * SHADOWING_STD_DB;
    half * ((-delta_ki / SHADOWING_DECORRELATION_M).exp2()
        + (-upsilon_lj / SHADOWING_DECORRELATION_M).exp2())
}

/// Pairs `(k, l)` with `d_kl >= 50 m`, in row-major order.
pub fn shadowed_pairs(geometry: &ScenarioGeometry) -> Vec<(usize, usize)> {
    let (k, l) = geometry.d_kl.shape();
    (0..k)
        .flat_map(|i| (0..l).map(move |j| (i, j)))
        .filter(|&(i, j)| geometry.d_kl[(i, j)] >= 50.0)
        .collect()
}

/// Full covariance of the shadowing terms over [`shadowed_pairs`].
///
/// Intended for inspection and tests; sampling uses the equivalent factored
/// construction in [`generate_drop`], which never forms this matrix.
pub fn shadowing_covariance(geometry: &ScenarioGeometry) -> Result<DMatrix<f64>> {
    let pairs = shadowed_pairs(geometry);
    let m = pairs.len();
    let mut c = DMatrix::from_fn(m, m, |a, b| {
        let (k, l) = pairs[a];
        let (i, j) = pairs[b];
        shadowing_cross_covariance(geometry.delta_ki[(k, i)], geometry.upsilon_lj[(l, j)])
    });
    if m > 0 {
        let eig = c.clone().symmetric_eigen();
        let scale = SHADOWING_STD_DB * SHADOWING_STD_DB;
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOLERANCE * scale {
            return Err(Error::ModelConsistency(format!(
                "shadowing covariance has eigenvalue {min:e}"
            )));
        }
        if min < 0.0 {
            let clamped = eig.eigenvalues.map(|v| v.max(0.0));
            c = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        }
    }
    Ok(c)
}

/// Symmetric square root of a real PSD matrix with the usual clamp.
fn real_psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = a.clone().symmetric_eigen();
    let scale = a.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let mut roots = DVector::zeros(a.nrows());
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v < -PSD_TOLERANCE * scale {
            return Err(Error::ModelConsistency(format!(
                "decorrelation kernel has eigenvalue {v:e}"
            )));
        }
        roots[i] = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

fn draw_normals<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Draws shadowing for every pair; entries with `d_kl < 50 m` are zero.
///
/// The covariance `32 (2^{-delta/100} + 2^{-upsilon/100})` is a sum of a UE
/// kernel and an AP kernel, so `F_kl = sqrt(32) (a_k + b_l)` with independent
/// Gaussian vectors `a ~ N(0, U)` and `b ~ N(0, V)` has exactly that law.
pub fn draw_shadowing<R: Rng>(geometry: &ScenarioGeometry, rng: &mut R) -> Result<DMatrix<f64>> {
    let u = geometry
        .delta_ki
        .map(|d| (-d / SHADOWING_DECORRELATION_M).exp2());
    let v = geometry
        .upsilon_lj
        .map(|d| (-d / SHADOWING_DECORRELATION_M).exp2());
    let a = real_psd_sqrt(&u)? * draw_normals(rng, u.nrows());
    let b = real_psd_sqrt(&v)? * draw_normals(rng, v.nrows());
    let s = (0.5 * SHADOWING_STD_DB * SHADOWING_STD_DB).sqrt();
    Ok(DMatrix::from_fn(a.len(), b.len(), |k, l| {
        if geometry.d_kl[(k, l)] >= 50.0 {
            s * (a[k] + b[l])
        } else {
            0.0
        }
    }))
}

/// Large-scale fading from geometry and a shadowing realisation.
pub fn large_scale_fading(geometry: &ScenarioGeometry, shadowing_db: DMatrix<f64>) -> LargeScaleFading {
    let beta = DMatrix::from_fn(geometry.d_kl.nrows(), geometry.d_kl.ncols(), |k, l| {
        let db = pathloss_db(geometry.d_kl[(k, l)]) + shadowing_db[(k, l)];
        10f64.powf(db / 10.0)
    });
    LargeScaleFading { beta, shadowing_db }
}

/// Uniform i.i.d. positions in `[0, side]^2`, pathloss and (optionally) shadowing.
pub fn generate_drop(
    dims: SystemDims,
    area_side: f64,
    seed: u64,
    drop: u64,
    shadowing: bool,
) -> Result<(ScenarioGeometry, LargeScaleFading)> {
    if !(area_side > 0.0) || !area_side.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "area side must be positive, got {area_side}"
        )));
    }
    SystemDims::new(dims.l, dims.k, dims.n)?;
    let mut rng = stream(seed, drop, 0, Purpose::Geometry);
    let mut point = || [rng.random::<f64>() * area_side, rng.random::<f64>() * area_side];
    let aps: Vec<_> = (0..dims.l).map(|_| point()).collect();
    let ues: Vec<_> = (0..dims.k).map(|_| point()).collect();
    let geometry = ScenarioGeometry::from_positions(aps, ues, area_side)?;
    let shadow = if shadowing {
        draw_shadowing(&geometry, &mut stream(seed, drop, 0, Purpose::Shadowing))?
    } else {
        DMatrix::zeros(dims.k, dims.l)
    };
    let lsf = large_scale_fading(&geometry, shadow);
    Ok((geometry, lsf))
}

/// Gaussian local-scattering correlation of a half-wavelength ULA.
pub fn local_scattering(n: usize, beta: f64, angle: f64, asd_rad: f64) -> CMatrix {
    let mut r = CMatrix::zeros(n, n);
    for m in 0..n {
        r[(m, m)] = Complex64::new(beta, 0.0);
        for q in 0..m {
            let diff = (m - q) as f64;
            let phase = std::f64::consts::PI * diff * angle.sin();
            let spread = asd_rad * std::f64::consts::PI * diff * angle.cos();
            let v = Complex64::from_polar(beta * (-0.5 * spread * spread).exp(), phase);
            r[(m, q)] = v;
            r[(q, m)] = v.conj();
        }
    }
    r
}

pub fn build_correlation(
    dims: SystemDims,
    geometry: &ScenarioGeometry,
    lsf: &LargeScaleFading,
    spread: AngularSpread,
) -> Result<SpatialCorrelation> {
    let asd_rad = match spread {
        AngularSpread::Degrees(a) if a > 0.0 && a.is_finite() => Some(a.to_radians()),
        AngularSpread::Degrees(a) => {
            return Err(Error::InvalidParameter(format!("ASD must be positive, got {a}")))
        }
        AngularSpread::Uncorrelated => None,
    };
    let angle = DMatrix::from_fn(dims.k, dims.l, |k, l| {
        let ue = geometry.ue_positions[k];
        let ap = geometry.ap_positions[l];
        (ue[1] - ap[1]).atan2(ue[0] - ap[0])
    });
    let mut r = Vec::with_capacity(dims.k * dims.l);
    for k in 0..dims.k {
        for l in 0..dims.l {
            let beta = lsf.beta[(k, l)];
            let phi = angle[(k, l)];
            if !phi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite nominal angle for UE {k}, AP {l}"
                )));
            }
            let m = match asd_rad {
                None => CMatrix::from_diagonal_element(dims.n, dims.n, Complex64::new(beta, 0.0)),
                Some(s) => local_scattering(dims.n, beta, phi, s),
            };
            if dims.n > 1 && asd_rad.is_some() {
                let min = hermitian_eigenvalues(&m)[0];
                if min < -PSD_TOLERANCE * beta {
                    return Err(Error::ModelConsistency(format!(
                        "correlation matrix for UE {k}, AP {l} has eigenvalue {min:e}"
                    )));
                }
            }
            r.push(m);
        }
    }
    Ok(SpatialCorrelation {
        r,
        spread,
        nominal_angle: angle,
        l: dims.l,
    })
}

impl Scenario {
    pub fn generate(
        dims: SystemDims,
        area_side: f64,
        seed: u64,
        drop: u64,
        shadowing: bool,
        spread: AngularSpread,
    ) -> Result<Self> {
        let (geometry, lsf) = generate_drop(dims, area_side, seed, drop, shadowing)?;
        let correlation = build_correlation(dims, &geometry, &lsf, spread)?;
        Ok(Self {
            dims,
            geometry,
            lsf,
            correlation,
        })
    }

    /// Assembles a scenario from an explicit large-scale fading matrix, e.g.
    /// for hand-built test cases. Positions are placed on a line so the
    /// nominal angles are well defined.
    pub fn from_beta(beta: DMatrix<f64>, n: usize, spread: AngularSpread) -> Result<Self> {
        let (k, l) = beta.shape();
        let dims = SystemDims::new(l, k, n)?;
        if beta.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::InvalidParameter("beta must be positive and finite".into()));
        }
        let aps = (0..l).map(|j| [10.0 * j as f64, 0.0]).collect();
        let ues = (0..k).map(|i| [5.0 + 7.0 * i as f64, 20.0 + 3.0 * i as f64]).collect();
        let geometry = ScenarioGeometry::from_positions(aps, ues, 1000.0)?;
        let lsf = LargeScaleFading {
            beta,
            shadowing_db: DMatrix::zeros(k, l),
        };
        let correlation = build_correlation(dims, &geometry, &lsf, spread)?;
        Ok(Self {
            dims,
            geometry,
            lsf,
            correlation,
        })
    }

    #[inline]
    pub fn r(&self, k: usize, l: usize) -> &CMatrix {
        self.correlation.get(k, l)
    }

    #[inline]
    pub fn beta(&self, k: usize, l: usize) -> f64 {
        self.lsf.beta[(k, l)]
    }

    pub fn dump(&self, include_r: bool) -> DropDump {
        let (k, l) = (self.dims.k, self.dims.l);
        DropDump {
            l,
            k,
            n: self.dims.n,
            ap_positions: self.geometry.ap_positions.clone(),
            ue_positions: self.geometry.ue_positions.clone(),
            beta_db: (0..k)
                .map(|i| (0..l).map(|j| 10.0 * self.beta(i, j).log10()).collect())
                .collect(),
            r: include_r.then(|| {
                self.correlation
                    .r
                    .iter()
                    .map(|m| {
                        // Row-major, interleaved real/imag.
                        let mut out = Vec::with_capacity(2 * m.len());
                        for a in 0..m.nrows() {
                            for b in 0..m.ncols() {
                                out.push(m[(a, b)].re);
                                out.push(m[(a, b)].im);
                            }
                        }
                        out
                    })
                    .collect()
            }),
        }
    }
}

/// JSON-friendly snapshot of a drop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropDump {
    pub l: usize,
    pub k: usize,
    pub n: usize,
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    pub beta_db: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pathloss_branches() {
        assert_eq!(pathloss_db(5.0), -81.2);
        assert_eq!(pathloss_db(9.99), -81.2);
        assert!((pathloss_db(10.0) - (-81.2)).abs() < 1e-12);
        assert!((pathloss_db(20.0) + 87.220_599_913_279_62).abs() < 1e-10);
        assert!((pathloss_db(49.99) - (-61.2 - 20.0 * 49.99f64.log10())).abs() < 1e-12);
        assert!((pathloss_db(50.0) - (-35.7 - 35.0 * 50f64.log10())).abs() < 1e-12);
    }

    #[test]
    fn cross_covariance_values() {
        assert_eq!(shadowing_cross_covariance(0.0, 0.0), 64.0);
        assert!((shadowing_cross_covariance(100.0, 100.0) - 32.0).abs() < 1e-12);
        assert!(shadowing_cross_covariance(1e6, 1e6) < 1e-100);
    }

    #[test]
    fn drops_are_deterministic() {
        let dims = SystemDims::new(8, 5, 2).unwrap();
        let a = generate_drop(dims, 500.0, 3, 1, true).unwrap().1;
        let b = generate_drop(dims, 500.0, 3, 1, true).unwrap().1;
        assert_eq!(a.beta, b.beta);
        let c = generate_drop(dims, 500.0, 3, 2, true).unwrap().1;
        assert_ne!(a.beta, c.beta);
    }

    #[test]
    fn rejects_bad_inputs() {
        let dims = SystemDims { l: 2, k: 2, n: 1 };
        assert!(generate_drop(dims, 0.0, 0, 0, false).is_err());
        assert!(generate_drop(SystemDims { l: 0, k: 2, n: 1 }, 10.0, 0, 0, false).is_err());
    }

    #[test]
    fn uncorrelated_and_single_antenna() {
        let beta = DMatrix::from_element(1, 1, 0.5);
        let s = Scenario::from_beta(beta.clone(), 2, AngularSpread::Uncorrelated).unwrap();
        assert_eq!(s.r(0, 0)[(0, 0)].re, 0.5);
        assert_eq!(s.r(0, 0)[(0, 1)], Complex64::new(0.0, 0.0));
        let s1 = Scenario::from_beta(beta, 1, AngularSpread::Degrees(20.0)).unwrap();
        assert_eq!(s1.r(0, 0)[(0, 0)], Complex64::new(0.5, 0.0));
    }

    #[test]
    fn narrower_spread_is_more_correlated() {
        let spread = |asd: f64| {
            let ev = hermitian_eigenvalues(&local_scattering(4, 1.0, 0.4, asd.to_radians()));
            ev[3] / ev[0].max(1e-300)
        };
        assert!(spread(10.0) > spread(50.0));
    }

    #[test]
    fn dump_serialises() {
        let s = Scenario::generate(SystemDims::new(2, 2, 2).unwrap(), 100.0, 1, 0, false, AngularSpread::Degrees(10.0)).unwrap();
        let json = serde_json::to_string(&s.dump(true)).unwrap();
        let back: DropDump = serde_json::from_str(&json).unwrap();
        assert_eq!(back.r.unwrap()[0].len(), 8);
    }
}
