//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..a.nrows() {
        for n in 0..a.ncols() {
            acc += a[(m, n)] * b[(n, m)];
        }
    }
    acc
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// `(A + A^H) / 2`
pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Largest entrywise modulus of `A - A^H`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let d = a - a.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitize(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Hermitian square root `V diag(sqrt(max(l, 0))) V^H`.
///
/// Eigenvalues below `-tolerance * scale` (with `scale` the mean diagonal
/// magnitude) are rejected; smaller negative values are clamped to zero.
pub fn psd_sqrt(a: &CMatrix, tolerance: f64) -> Result<CMatrix> {
    let n = a.nrows();
    if n == 1 {
        let v = a[(0, 0)].re;
        if v < -tolerance * v.abs() {
            return Err(Error::ModelConsistency(format!(
                "negative variance {v} in covariance factor"
            )));
        }
        return Ok(CMatrix::from_element(1, 1, Complex64::new(v.max(0.0).sqrt(), 0.0)));
    }
    let scale = a.diagonal().iter().map(|z| z.re.abs()).sum::<f64>() / n as f64;
    let eig = hermitize(a).symmetric_eigen();
    let mut roots = Vec::with_capacity(n);
    for &ev in eig.eigenvalues.iter() {
        if ev < -tolerance * scale {
            return Err(Error::ModelConsistency(format!(
                "eigenvalue {ev:e} below tolerance for a covariance of scale {scale:e}"
            )));
        }
        roots.push(Complex64::new(ev.max(0.0).sqrt(), 0.0));
    }
    let v = &eig.eigenvectors;
    let d = CMatrix::from_diagonal(&CVector::from_vec(roots));
    Ok(v * d * v.adjoint())
}

/// Draw `CN(0, I_n)`.
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

/// `x^H y`
pub fn inner(x: &CVector, y: &CVector) -> Complex64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// `x^H A x` for Hermitian `A` (real part).
pub fn quadratic_form(x: &CVector, a: &CMatrix) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..x.len() {
        let mut row = Complex64::new(0.0, 0.0);
        for n in 0..x.len() {
            row += a[(m, n)] * x[n];
        }
        acc += x[m].conj() * row;
    }
    acc.re
}
