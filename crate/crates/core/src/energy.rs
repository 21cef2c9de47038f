//! Power consumption model and total energy efficiency.
//!
//! All powers are in watts, bandwidth in Hz and SE in bit/s/Hz; unit
//! conversions happen only when reading configuration.

use serde::{Deserialize, Serialize};

use crate::aging::FrameConfig;
use crate::downlink::DownlinkPowerControl;
use crate::error::{Error, Result};
use crate::estimation::TraceStatistics;
use crate::uplink::{SeResult, UplinkPowerControl};

/// Circuit and amplifier parameters. Defaults are the reference values used
/// throughout the crate's examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerModel {
    /// Power amplifier efficiency at the UEs.
    pub pa_eff_ue: f64,
    /// Power amplifier efficiency at the APs.
    pub pa_eff_ap: f64,
    /// Circuit power per UE (W).
    pub p_ue_w: f64,
    /// Circuit power per AP antenna (W).
    pub p_ap_w: f64,
    /// Fixed fronthaul power per AP (W).
    pub p_0_w: f64,
    /// Traffic-dependent fronthaul power (W per Gbit/s).
    pub p_bt_w_per_gbps: f64,
    /// When set, transmit powers are read as SNRs normalised by the noise
    /// power, so the amplifier terms reduce to `p eta / eff` in watts.
    /// By default the amplifier terms carry the literal `p sigma^2` product.
    pub normalized_snr: bool,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            pa_eff_ue: 0.4,
            pa_eff_ap: 0.4,
            p_ue_w: 0.1,
            p_ap_w: 0.2,
            p_0_w: 0.825,
            p_bt_w_per_gbps: 0.25,
            normalized_snr: false,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        for (name, eff) in [("pa_eff_ue", self.pa_eff_ue), ("pa_eff_ap", self.pa_eff_ap)] {
            if !(eff > 0.0 && eff <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1], got {eff}")));
            }
        }
        for (name, v) in [
            ("p_ue_w", self.p_ue_w),
            ("p_ap_w", self.p_ap_w),
            ("p_0_w", self.p_0_w),
            ("p_bt_w_per_gbps", self.p_bt_w_per_gbps),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Traffic-dependent fronthaul power in W per bit/s.
    pub fn p_bt_w_per_bps(&self) -> f64 {
        self.p_bt_w_per_gbps * 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyResult {
    pub p_tx_ul: f64,
    pub p_tx_dl: f64,
    pub p_cp: f64,
    pub p_total: f64,
    pub se_sum: f64,
    /// bit/Joule.
    pub ee_total: f64,
}

/// `sum_k (SE_ul[k] + SE_dl[k]) / 2`.
pub fn sum_se(uplink: &SeResult, downlink: &SeResult) -> Result<f64> {
    sum_se_values(&uplink.se, &downlink.se)
}

pub fn sum_se_values(uplink: &[f64], downlink: &[f64]) -> Result<f64> {
    if uplink.len() != downlink.len() {
        return Err(Error::InvalidParameter(format!(
            "UE count mismatch: {} uplink vs {} downlink",
            uplink.len(),
            downlink.len()
        )));
    }
    Ok(uplink.iter().zip(downlink).map(|(u, d)| 0.5 * (u + d)).sum())
}

/// Inputs of the power model that come from one evaluated drop.
#[derive(Debug, Clone, Copy)]
pub struct EnergyInputs<'a> {
    pub frame: &'a FrameConfig,
    pub uplink: &'a UplinkPowerControl,
    pub downlink: &'a DownlinkPowerControl,
    pub traces: &'a TraceStatistics,
    pub n_antennas: usize,
    pub sigma2: f64,
    pub bandwidth_hz: f64,
    pub se_sum: f64,
}

pub fn total_power(model: &PowerModel, input: EnergyInputs<'_>) -> Result<EnergyResult> {
    model.validate()?;
    let frame = input.frame;
    if frame.tau_p >= frame.tau_c {
        return Err(Error::InvalidParameter("tau_p must be smaller than tau_c".into()));
    }
    let (k_n, l_n) = (input.traces.k, input.traces.l);
    let scale = if model.normalized_snr { 1.0 } else { input.sigma2 };
    let p_tx_ul: f64 = input
        .uplink
        .eta
        .iter()
        .map(|eta| input.uplink.p_u * scale * eta / model.pa_eff_ue)
        .sum();
    let p_tx_dl: f64 = input
        .downlink
        .load(input.traces)
        .iter()
        .map(|load| input.downlink.p_d * scale * load / model.pa_eff_ap)
        .sum();
    let p_cp = k_n as f64 * model.p_ue_w
        + l_n as f64 * input.n_antennas as f64 * model.p_ap_w
        + l_n as f64 * (model.p_0_w + input.bandwidth_hz * input.se_sum * model.p_bt_w_per_bps());
    let tc = frame.tau_c as f64;
    let tp = frame.tau_p as f64;
    let p_total = (tc + tp) / (2.0 * tc) * p_tx_ul + (tc - tp) / (2.0 * tc) * p_tx_dl + p_cp;
    Ok(EnergyResult {
        p_tx_ul,
        p_tx_dl,
        p_cp,
        p_total,
        se_sum: input.se_sum,
        ee_total: input.bandwidth_hz * input.se_sum / p_total,
    })
}
