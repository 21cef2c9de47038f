//! Temporal correlation under mobility (Jakes model) and resource-block
//! bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{bessel_j0, bessel_j0_first_zero};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Resource-block layout. Instants are numbered `1..=tau_c`; pilots occupy
/// `1..=tau_p` and data runs from `lambda = tau_p + 1` to `tau_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub tau_c: usize,
    pub tau_p: usize,
    /// Seconds per instant.
    pub t_s: f64,
}

impl FrameConfig {
    pub fn new(tau_c: usize, tau_p: usize, t_s: f64) -> Result<Self> {
        if tau_p == 0 || tau_p >= tau_c {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= tau_p < tau_c (tau_p = {tau_p}, tau_c = {tau_c})"
            )));
        }
        if !(t_s > 0.0) {
            return Err(Error::InvalidParameter(format!("T_s must be positive, got {t_s}")));
        }
        Ok(Self { tau_c, tau_p, t_s })
    }

    #[inline]
    pub fn lambda(&self) -> usize {
        self.tau_p + 1
    }

    /// Data instants `lambda..=tau_c`.
    pub fn data_instants(&self) -> std::ops::RangeInclusive<usize> {
        self.lambda()..=self.tau_c
    }

    pub fn data_len(&self) -> usize {
        self.tau_c - self.tau_p
    }
}

/// `rho[n] = J0(2 pi f_D T_s n)`.
pub fn rho(f_d_ts: f64, n: usize) -> f64 {
    if n == 0 || f_d_ts == 0.0 {
        return 1.0;
    }
    bessel_j0(2.0 * std::f64::consts::PI * f_d_ts.abs() * n as f64)
}

/// Largest block length not exceeding the first zero of the temporal
/// correlation at the given normalised Doppler shift.
pub fn design_tau_c(f_d_ts_max: f64) -> Result<usize> {
    if f_d_ts_max == 0.0 {
        return Err(Error::InvalidParameter(
            "unbounded block length: zero Doppler shift".into(),
        ));
    }
    if !(f_d_ts_max > 0.0) || !f_d_ts_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "normalised Doppler shift must be positive, got {f_d_ts_max}"
        )));
    }
    let j01 = bessel_j0_first_zero();
    Ok((j01 / (2.0 * std::f64::consts::PI * f_d_ts_max)).floor() as usize)
}

/// Normalised Doppler shift `v f_c / c * T_s`.
pub fn doppler_from_speed(speed_mps: f64, f_c: f64, t_s: f64) -> f64 {
    speed_mps * f_c / SPEED_OF_LIGHT * t_s
}

/// Tabulated `rho_k[n]` and `rho_bar_k[n]` for `n = 0..=tau_c`.
#[derive(Debug, Clone)]
pub struct AgingProfile {
    pub f_d_ts: Vec<f64>,
    rho: Vec<Vec<f64>>,
    rho_bar: Vec<Vec<f64>>,
}

impl AgingProfile {
    pub fn new(frame: &FrameConfig, f_d_ts: &[f64]) -> Result<Self> {
        if let Some(bad) = f_d_ts.iter().find(|f| !f.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite Doppler shift {bad}")));
        }
        let rho: Vec<Vec<f64>> = f_d_ts
            .iter()
            .map(|&f| (0..=frame.tau_c).map(|n| rho(f, n)).collect())
            .collect();
        let rho_bar = rho
            .iter()
            .map(|row| row.iter().map(|r| (1.0 - r * r).max(0.0).sqrt()).collect())
            .collect();
        Ok(Self {
            f_d_ts: f_d_ts.to_vec(),
            rho,
            rho_bar,
        })
    }

    pub fn uniform(frame: &FrameConfig, k: usize, f_d_ts: f64) -> Result<Self> {
        Self::new(frame, &vec![f_d_ts; k])
    }

    #[inline]
    pub fn rho(&self, k: usize, lag: usize) -> f64 {
        self.rho[k][lag]
    }

    #[inline]
    pub fn rho_bar(&self, k: usize, lag: usize) -> f64 {
        self.rho_bar[k][lag]
    }

    pub fn rho_table(&self, k: usize) -> &[f64] {
        &self.rho[k]
    }

    pub fn num_ues(&self) -> usize {
        self.rho.len()
    }

    /// Groups of UEs sharing the same Doppler shift (and hence the same table).
    pub fn doppler_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for (k, &f) in self.f_d_ts.iter().enumerate() {
            let f = f.abs();
            match groups.iter_mut().find(|(g, _)| *g == f) {
                Some((_, members)) => members.push(k),
                None => groups.push((f, vec![k])),
            }
        }
        groups.into_iter().map(|(_, m)| m).collect()
    }
}
