//! Bessel function of the first kind of order zero and the exponentially
//! scaled exponential integral `e^x E1(x)`.
//!
//! Both are evaluated from scratch so results do not depend on which libm the
//! platform ships.

use std::f64::consts::{FRAC_PI_4, PI};

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Below this argument the power series is used.
const J0_SERIES_LIMIT: f64 = 8.0;
/// At and above this argument the Hankel asymptotic expansion is used; the
/// band in between runs Miller's backward recurrence.
const J0_ASYMPTOTIC_LIMIT: f64 = 25.0;

/// `J0(x)`, the zeroth-order Bessel function of the first kind.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax.is_nan() {
        return f64::NAN;
    }
    if ax < J0_SERIES_LIMIT {
        j0_series(ax)
    } else if ax < J0_ASYMPTOTIC_LIMIT {
        j0_miller(ax)
    } else {
        j0_asymptotic(ax)
    }
}

fn j0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..100 {
        term *= -q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-20 {
            break;
        }
    }
    sum
}

/// Backward recurrence `J_{n-1} = (2n/x) J_n - J_{n+1}` normalised with
/// `1 = J_0 + 2 sum_k J_{2k}`.
fn j0_miller(x: f64) -> f64 {
    let start = 2 * ((1.5 * x) as usize / 2 + 20);
    let mut above = 0.0;
    let mut current = 1.0;
    let mut norm = 0.0;
    for n in (1..=start).rev() {
        let below = 2.0 * n as f64 / x * current - above;
        above = current;
        current = below;
        let order = n - 1;
        if order > 0 && order % 2 == 0 {
            norm += 2.0 * current;
        }
        if current.abs() > 1e250 {
            current *= 1e-250;
            above *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += current;
    current / norm
}

fn j0_asymptotic(x: f64) -> f64 {
    // P and Q series of the Hankel expansion for order zero.
    let eight_x = 8.0 * x;
    let mut term = 1.0_f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        term *= -(odd * odd) / (k as f64 * eight_x);
        if term.abs() > last || term.abs() < 1e-18 {
            break;
        }
        last = term.abs();
        // `term` already carries (-1)^k; P and Q then alternate every other k.
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// First positive root of `J0`, found by bisection on [`bessel_j0`].
pub fn bessel_j0_first_zero() -> f64 {
    let (mut lo, mut hi) = (2.0_f64, 3.0_f64);
    while hi - lo > 4.0 * f64::EPSILON {
        let mid = 0.5 * (lo + hi);
        if bessel_j0(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `e^x E1(x)` for `x > 0`, where `E1(x) = ∫_1^∞ e^{-xu}/u du`.
///
/// Returns NaN for `x <= 0`. For `x <= 1` the convergent series of `E1` is
/// scaled; above that the continued fraction gives the scaled value directly,
/// so neither factor is ever formed on its own.
pub fn exp_scaled_e1(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..100 {
            term *= -x / k as f64;
            let contrib = term / k as f64;
            sum += contrib;
            if contrib.abs() < 1e-18 {
                break;
            }
        }
        x.exp() * (-EULER_GAMMA - x.ln() - sum)
    } else {
        // Modified Lentz evaluation of 1/(x+1- 1/(x+3- 4/(x+5- ...))).
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let delta = c * d;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h
    }
}

/// Exponential integral `E1(x)` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    exp_scaled_e1(x) * (-x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j0_at_origin_is_one() {
        assert_eq!(bessel_j0(0.0), 1.0);
    }

    #[test]
    fn j0_is_even() {
        for x in [0.3, 4.2, 11.0, 31.5] {
            assert_eq!(bessel_j0(x), bessel_j0(-x));
        }
    }

    #[test]
    fn j0_branches_agree_at_boundaries() {
        for x in [J0_SERIES_LIMIT, J0_ASYMPTOTIC_LIMIT] {
            let below = if x == J0_SERIES_LIMIT {
                j0_series(x)
            } else {
                j0_miller(x)
            };
            let above = if x == J0_SERIES_LIMIT {
                j0_miller(x)
            } else {
                j0_asymptotic(x)
            };
            assert!((below - above).abs() < 1e-13, "{x}: {below} vs {above}");
        }
    }

    #[test]
    fn first_zero_matches_tabulated_value() {
        assert!((bessel_j0_first_zero() - 2.404_825_557_695_773).abs() < 1e-14);
    }

    #[test]
    fn e1_invalid_argument_is_nan() {
        assert!(exp_scaled_e1(0.0).is_nan());
        assert!(exp_scaled_e1(-1.0).is_nan());
    }

    #[test]
    fn scaled_e1_large_argument_tends_to_reciprocal() {
        let x = 1e6;
        assert!((exp_scaled_e1(x) * x - 1.0).abs() < 1e-5);
    }

    #[test]
    fn e1_of_one() {
        assert!((exp_integral_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
    }
}
