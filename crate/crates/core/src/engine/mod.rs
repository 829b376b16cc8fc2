//! The round state machine: broadcast, local training, stochastic upload,
//! time-window gating, buffer/memory aggregation and termination.

mod aggregate;
mod config;
mod report;
mod sim;

pub use aggregate::{buffer_update, AggregationRule, Incoming};
pub use config::{
    Comparator, EngineConfig, LrSchedule, Metric, Mode, ParticipationScale, TargetMetric, TerminationSpec,
};
pub use report::{RoundRecord, SimulationReport, Summary};
pub use sim::{run_simulation, ClientPhase, ClientUpload, Gather, RoundState, SerialGather, Simulation};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, LinkSample};
use crate::learning::LearningError;
use crate::metrics::MetricsError;
use crate::topology::TopologyError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("operation requires {expected:?} mode")]
    ModeMismatch { expected: Mode },
    #[error("unknown client `{0}`")]
    UnknownClient(String),
    #[error("worker failure in cell `{cell}`: {message}")]
    Worker { cell: String, message: String },
}

/// Which mechanism closed the activated set of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    /// Every scheduled client arrived in time.
    #[default]
    None,
    /// At least one client missed the time window.
    Window,
    /// The server stopped after the first K arrivals.
    KLimit,
}

/// What happened in one round.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round_index: usize,
    /// Activated clients in arrival order.
    pub activated: Vec<String>,
    /// Arrival time (compute plus upload) of every scheduled client.
    pub arrivals: BTreeMap<String, f64>,
    /// Clients that missed the window or were cut by the K limit, sorted.
    pub dropped: Vec<String>,
    pub round_duration_s: f64,
    pub uplink_samples: BTreeMap<String, LinkSample>,
    pub upload_times: BTreeMap<String, f64>,
    pub compute_times: BTreeMap<String, f64>,
    pub gate: Gate,
    /// Step size of the first local step.
    pub eta: f64,
    /// Step sizes of every local step.
    pub etas: Vec<f64>,
    pub empty_activation: bool,
}

impl RoundOutcome {
    /// Fraction of `n_total` clients that were activated.
    pub fn participation(&self, n_total: usize) -> f64 {
        if n_total == 0 {
            0.0
        } else {
            self.activated.len() as f64 / n_total as f64
        }
    }
}
