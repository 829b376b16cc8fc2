use serde::{Deserialize, Serialize};

use super::{AggregationRule, EngineError};
use crate::learning::NoiseSpec;
use crate::metrics::DroppedAirtime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sync,
    Async,
}

/// Participation ratio fed to the theorem schedule. The realized ratio of a
/// round is only known after its uploads, so the schedule uses either a
/// configured expectation or the previous round's ratio.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParticipationScale {
    #[default]
    None,
    Expected {
        r: f64,
    },
    Observed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant {
        eta: f64,
    },
    /// `eta_t = 2 r_t / (mu (gamma + t))`. Missing `mu` and `gamma` are taken
    /// from the task's curvature, with `gamma = max(8 L / mu, E)`.
    Theorem {
        #[serde(default)]
        mu: Option<f64>,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        participation: ParticipationScale,
    },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::Constant { eta: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `F(w)` of the committed global model.
    Loss,
    /// `F(w) - F*`.
    Gap,
    /// `|w - w*|^2`.
    DistSq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Le => value <= threshold,
            Comparator::Ge => value >= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetMetric {
    pub metric: Metric,
    pub comparator: Comparator,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationSpec {
    pub max_rounds: Option<usize>,
    pub max_sim_time_s: Option<f64>,
    pub max_energy_j: Option<f64>,
    pub target: Option<TargetMetric>,
}

impl TerminationSpec {
    pub fn rounds(n: usize) -> Self {
        Self { max_rounds: Some(n), ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_rounds.is_none()
            && self.max_sim_time_s.is_none()
            && self.max_energy_j.is_none()
            && self.target.is_none()
        {
            return Err(EngineError::Config("termination needs at least one condition".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub mode: Mode,
    /// Server-side deadline `epsilon` in seconds.
    pub time_window_s: f64,
    /// Local SGD steps per round.
    pub e_steps: usize,
    pub batch: usize,
    pub lr: LrSchedule,
    /// Advance the theorem schedule per local step instead of per round.
    pub lr_per_step: bool,
    pub aggregation: AggregationRule,
    pub async_rule: AggregationRule,
    /// Stop waiting after the first K arrivals.
    pub max_responses: Option<usize>,
    pub noise: NoiseSpec,
    pub termination: TerminationSpec,
    pub enforce_battery: bool,
    pub dropped_airtime: DroppedAirtime,
    pub downlink_energy: bool,
    /// Multiply compute time by `s_n / mean(s)`.
    pub scale_compute_by_data: bool,
    /// Starting global model; zeros when absent.
    pub initial_model: Option<Vec<f64>>,
    /// Compute `F*` and `w*` for gap and distance tracking.
    pub track_optimum: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sync,
            time_window_s: 1.0,
            e_steps: 1,
            batch: 1,
            lr: LrSchedule::default(),
            lr_per_step: false,
            aggregation: AggregationRule::FedavgFull,
            async_rule: AggregationRule::RunningAverage { alpha: 0.5 },
            max_responses: None,
            noise: NoiseSpec::default(),
            termination: TerminationSpec::rounds(100),
            enforce_battery: false,
            dropped_airtime: DroppedAirtime::Full,
            downlink_energy: true,
            scale_compute_by_data: false,
            initial_model: None,
            track_optimum: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.time_window_s.is_finite() && self.time_window_s > 0.0) {
            return Err(EngineError::Config(format!("time window must be positive, got {}", self.time_window_s)));
        }
        if self.e_steps > 0 && self.batch == 0 {
            return Err(EngineError::Config("batch must be positive".into()));
        }
        if self.max_responses == Some(0) {
            return Err(EngineError::Config("max_responses must be positive".into()));
        }
        if !(self.noise.nis.is_finite() && self.noise.nis >= 0.0) {
            return Err(EngineError::Config(format!("nis must be nonnegative, got {}", self.noise.nis)));
        }
        match self.lr {
            LrSchedule::Constant { eta } if !(eta.is_finite() && eta >= 0.0) => {
                return Err(EngineError::Config(format!("learning rate must be nonnegative, got {eta}")));
            }
            LrSchedule::Theorem { participation: ParticipationScale::Expected { r }, .. } if !(r > 0.0 && r <= 1.0) => {
                return Err(EngineError::Config(format!("expected participation must lie in (0, 1], got {r}")));
            }
            _ => {}
        }
        self.aggregation.validate()?;
        self.async_rule.validate()?;
        self.termination.validate()
    }
}
