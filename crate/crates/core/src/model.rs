//! One fully evaluated network drop: scenario, aging, pilots and estimation
//! statistics, with convenience methods for every scheme.

use serde::{Deserialize, Serialize};

use crate::aging::{AgingProfile, FrameConfig};
use crate::downlink::{downlink_sccpc, downlink_se, DownlinkPowerControl};
use crate::energy::{sum_se, total_power, EnergyInputs, EnergyResult, PowerModel};
use crate::error::{Error, Result};
use crate::estimation::{assign_pilots, EstimationStatistics, PilotAssignment, TraceStatistics};
use crate::scenario::{AngularSpread, Scenario, SystemDims};
use crate::uplink::{
    smallcell_se, uplink_sccpc, uplink_se, PowerMode, Scheme, SeResult, SmallCellMode,
    UplinkPowerControl,
};

/// Order in which the small-cell serving AP and its power control are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmallCellOrdering {
    /// Power coefficients from the full-power serving APs; serving APs are
    /// then re-selected under the new coefficients.
    #[default]
    Reselect,
    /// Keep the full-power serving APs.
    Keep,
}

/// Physical and numerical parameters shared by every drop.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: SystemDims,
    pub area_side: f64,
    pub spread: AngularSpread,
    pub shadowing: bool,
    pub frame: FrameConfig,
    /// Per-UE normalised Doppler shifts (length K) or a single shared value.
    pub f_d_ts: Vec<f64>,
    /// Pilot power (W), shared by all UEs.
    pub pilot_power: f64,
    /// Maximum uplink data power (W).
    pub p_u: f64,
    /// Maximum per-AP downlink power (W).
    pub p_d: f64,
    /// Noise power at the APs during pilots and uplink data (W).
    pub sigma2_ul: f64,
    /// Noise power at the UEs (W).
    pub sigma2_dl: f64,
    /// Estimate draws for the multi-antenna small-cell rate.
    pub sc_draws: usize,
    /// Candidate serving APs (strongest first) for the multi-antenna small-cell rate.
    pub sc_candidates: usize,
    pub sc_ordering: SmallCellOrdering,
}

impl ModelParams {
    /// Reference setup: 500 m square, 20 dBm pilot and uplink power, 23 dBm
    /// downlink power, -96 dBm noise, 0.01 ms instants.
    pub fn reference(l: usize, k: usize, n: usize) -> Result<Self> {
        Ok(Self {
            dims: SystemDims::new(l, k, n)?,
            area_side: 500.0,
            spread: AngularSpread::Degrees(30.0),
            shadowing: true,
            frame: FrameConfig::new(200, 10, 1e-5)?,
            f_d_ts: vec![0.0],
            pilot_power: dbm_to_w(20.0),
            p_u: dbm_to_w(20.0),
            p_d: dbm_to_w(23.0),
            sigma2_ul: dbm_to_w(-96.0),
            sigma2_dl: dbm_to_w(-96.0),
            sc_draws: 200,
            sc_candidates: 5,
            sc_ordering: SmallCellOrdering::Reselect,
        })
    }

    pub fn doppler_per_ue(&self) -> Result<Vec<f64>> {
        match self.f_d_ts.len() {
            1 => Ok(vec![self.f_d_ts[0]; self.dims.k]),
            n if n == self.dims.k => Ok(self.f_d_ts.clone()),
            n => Err(Error::InvalidParameter(format!(
                "expected 1 or {} Doppler values, got {n}",
                self.dims.k
            ))),
        }
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub params: ModelParams,
    pub seed: u64,
    pub drop: u64,
    pub scenario: Scenario,
    pub aging: AgingProfile,
    pub pilots: PilotAssignment,
    pub stats: EstimationStatistics,
    pub traces: TraceStatistics,
}

impl SystemModel {
    /// Generates drop `drop` of the run seeded with `seed`.
    pub fn build(params: &ModelParams, seed: u64, drop: u64) -> Result<Self> {
        let scenario = Scenario::generate(
            params.dims,
            params.area_side,
            seed,
            drop,
            params.shadowing,
            params.spread,
        )?;
        let pilots = assign_pilots(params.dims.k, params.frame.tau_p, params.pilot_power, seed, drop)?;
        Self::from_parts(params, seed, drop, scenario, pilots)
    }

    pub fn from_parts(
        params: &ModelParams,
        seed: u64,
        drop: u64,
        scenario: Scenario,
        pilots: PilotAssignment,
    ) -> Result<Self> {
        let aging = AgingProfile::new(&params.frame, &params.doppler_per_ue()?)?;
        let stats = EstimationStatistics::compute(&scenario, &pilots, &aging, &params.frame, params.sigma2_ul)?;
        let traces = TraceStatistics::from_matrices(&scenario, &stats);
        Ok(Self {
            params: params.clone(),
            seed,
            drop,
            scenario,
            aging,
            pilots,
            stats,
            traces,
        })
    }

    /// Same drop (geometry, shadowing, pilots) under different Doppler shifts.
    pub fn with_doppler(&self, f_d_ts: Vec<f64>) -> Result<Self> {
        let mut params = self.params.clone();
        params.f_d_ts = f_d_ts;
        Self::from_parts(&params, self.seed, self.drop, self.scenario.clone(), self.pilots.clone())
    }

    pub fn frame(&self) -> &FrameConfig {
        &self.params.frame
    }

    pub fn k(&self) -> usize {
        self.params.dims.k
    }

    pub fn uplink_pc(&self, mode: PowerMode) -> UplinkPowerControl {
        match mode {
            PowerMode::Full => UplinkPowerControl::full(self.k(), self.params.p_u),
            PowerMode::Sccpc => UplinkPowerControl {
                eta: uplink_sccpc(&self.scenario.lsf.beta, None),
                p_u: self.params.p_u,
            },
        }
    }

    pub fn downlink_pc(&self, mode: PowerMode) -> Result<DownlinkPowerControl> {
        downlink_sccpc(&self.traces, &self.scenario.lsf.beta, self.params.p_d, mode)
    }

    fn smallcell_mode(&self) -> SmallCellMode {
        if self.params.dims.n == 1 {
            SmallCellMode::ClosedFormN1
        } else {
            SmallCellMode::MonteCarlo {
                draws: self.params.sc_draws,
                candidates: self.params.sc_candidates,
                seed: self.seed,
                drop: self.drop,
            }
        }
    }

    fn smallcell(&self, mode: PowerMode) -> Result<SeResult> {
        let run = |pc: &UplinkPowerControl, sc: SmallCellMode| {
            smallcell_se(&self.scenario, &self.stats, &self.traces, &self.pilots, &self.aging, self.frame(), pc, sc)
        };
        let full = run(&self.uplink_pc(PowerMode::Full), self.smallcell_mode())?;
        if mode == PowerMode::Full {
            return Ok(full);
        }
        let serving = full.serving_ap.clone().unwrap_or_default();
        let pc = UplinkPowerControl {
            eta: uplink_sccpc(&self.scenario.lsf.beta, Some(&serving)),
            p_u: self.params.p_u,
        };
        match self.params.sc_ordering {
            SmallCellOrdering::Reselect => run(&pc, self.smallcell_mode()),
            SmallCellOrdering::Keep => {
                // Evaluate each UE only at its full-power serving AP.
                let mut result = run(&pc, self.smallcell_mode())?;
                let per_ap = self.smallcell_matrix(&pc)?;
                for k in 0..self.k() {
                    let se = per_ap[(k, serving[k])];
                    result.se[k] = se;
                    let data = self.frame().data_len();
                    result.sinr[k] = vec![(se * self.frame().tau_c as f64 / data as f64).exp2() - 1.0; data];
                }
                result.serving_ap = Some(serving);
                Ok(result)
            }
        }
    }

    fn smallcell_matrix(&self, pc: &UplinkPowerControl) -> Result<nalgebra::DMatrix<f64>> {
        match self.smallcell_mode() {
            SmallCellMode::ClosedFormN1 => crate::uplink::smallcell_se_matrix_n1(
                &self.scenario,
                &self.traces,
                &self.pilots,
                &self.aging,
                self.frame(),
                pc,
                self.params.sigma2_ul,
            ),
            SmallCellMode::MonteCarlo { draws, candidates, seed, drop } => crate::uplink::smallcell_se_matrix_mc(
                &self.scenario,
                &self.stats,
                &self.pilots,
                &self.aging,
                self.frame(),
                pc,
                draws,
                candidates,
                seed,
                drop,
            ),
        }
    }

    pub fn evaluate(&self, scheme: Scheme, mode: PowerMode) -> Result<SeResult> {
        match scheme {
            Scheme::Lsfd | Scheme::Mf => uplink_se(
                &self.traces,
                &self.aging,
                self.frame(),
                &self.uplink_pc(mode),
                self.params.sigma2_ul,
                scheme,
            ),
            Scheme::Sc => self.smallcell(mode),
            Scheme::Coherent | Scheme::Noncoherent => downlink_se(
                &self.traces,
                &self.aging,
                self.frame(),
                &self.downlink_pc(mode)?,
                self.params.sigma2_dl,
                scheme,
            ),
        }
    }

    /// Total power and energy efficiency with uplink LSFD and coherent
    /// downlink, both under `mode`.
    pub fn energy(&self, model: &PowerModel, bandwidth_hz: f64, mode: PowerMode) -> Result<EnergyResult> {
        let ul = self.evaluate(Scheme::Lsfd, mode)?;
        let dl = self.evaluate(Scheme::Coherent, mode)?;
        let se_sum = sum_se(&ul, &dl)?;
        total_power(
            model,
            EnergyInputs {
                frame: self.frame(),
                uplink: &self.uplink_pc(mode),
                downlink: &self.downlink_pc(mode)?,
                traces: &self.traces,
                n_antennas: self.params.dims.n,
                sigma2: self.params.sigma2_ul,
                bandwidth_hz,
                se_sum,
            },
        )
    }
}
