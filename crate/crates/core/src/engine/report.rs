//! Line-delimited simulation report: one `round` record per round followed by
//! one `summary` record.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EngineError, Gate, Mode, RoundOutcome};
use crate::metrics::QosLedger;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Simulated clock after the round.
    pub clock_s: f64,
    pub duration_s: f64,
    /// Activated clients in arrival order.
    pub activated: Vec<String>,
    pub n_activated: usize,
    pub dropped: Vec<String>,
    pub gate: Gate,
    pub participation: f64,
    pub eta: f64,
    pub etas: Vec<f64>,
    pub loss: f64,
    pub gap: Option<f64>,
    pub dist_sq: Option<f64>,
    /// Cumulative energy of all agents.
    pub energy_j: f64,
    pub round_energy_j: f64,
    pub bits_attempted: u64,
    pub bits_delivered: u64,
    pub lost_bits: u64,
    pub packets_lost: u64,
    pub throughput_bps: f64,
    pub arrivals: BTreeMap<String, f64>,
    pub retransmissions: BTreeMap<String, u32>,
    pub warning: Option<String>,
}

impl RoundRecord {
    pub fn new(
        outcome: &RoundOutcome,
        ledger: &QosLedger,
        n_clients: usize,
        loss: f64,
        gap: Option<f64>,
        dist_sq: Option<f64>,
    ) -> Self {
        let qos = ledger.rounds.last().cloned().unwrap_or(crate::metrics::RoundQos {
            round: outcome.round_index,
            duration_s: outcome.round_duration_s,
            energy_j: 0.0,
            bits_attempted: 0,
            bits_delivered: 0,
            lost_bits: 0,
            packets_lost: 0,
            active_links: outcome.activated.len(),
        });
        Self {
            round: outcome.round_index,
            clock_s: ledger.total_time_s,
            duration_s: outcome.round_duration_s,
            activated: outcome.activated.clone(),
            n_activated: outcome.activated.len(),
            dropped: outcome.dropped.clone(),
            gate: outcome.gate,
            participation: outcome.participation(n_clients),
            eta: outcome.eta,
            etas: outcome.etas.clone(),
            loss,
            gap,
            dist_sq,
            energy_j: ledger.total_energy_j,
            round_energy_j: qos.energy_j,
            bits_attempted: qos.bits_attempted,
            bits_delivered: qos.bits_delivered,
            lost_bits: qos.lost_bits,
            packets_lost: qos.packets_lost,
            throughput_bps: ledger.throughput_bps.last().copied().unwrap_or(0.0),
            arrivals: outcome.arrivals.clone(),
            retransmissions: outcome.uplink_samples.iter().map(|(k, v)| (k.clone(), v.retransmissions)).collect(),
            warning: outcome.empty_activation.then(|| "no client arrived within the time window".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub mode: Mode,
    pub n_clients: usize,
    pub rounds: usize,
    /// `target`, `max_rounds`, `max_sim_time` or `max_energy`.
    pub terminated_by: String,
    pub initial_loss: f64,
    pub initial_gap: Option<f64>,
    pub initial_dist_sq: Option<f64>,
    pub final_loss: f64,
    pub final_gap: Option<f64>,
    pub final_dist_sq: Option<f64>,
    pub f_star: Option<f64>,
    pub total_energy_j: f64,
    pub total_time_s: f64,
    pub bits_attempted: u64,
    pub bits_delivered: u64,
    pub packets_lost: u64,
    pub mean_throughput_bps: f64,
    pub per_agent_energy_j: BTreeMap<String, f64>,
    pub fairness_ratio: Option<f64>,
    pub final_model: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Line {
    Round(RoundRecord),
    Summary(Summary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub rounds: Vec<RoundRecord>,
    pub summary: Summary,
}

impl SimulationReport {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            out.push_str(&serde_json::to_string(&Line::Round(r.clone())).expect("round record serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&Line::Summary(self.summary.clone())).expect("summary serializes"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, EngineError> {
        let mut rounds = Vec::new();
        let mut summary = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str::<Line>(line) {
                Ok(Line::Round(r)) => rounds.push(r),
                Ok(Line::Summary(s)) => summary = Some(s),
                Err(e) => return Err(EngineError::Config(format!("report line {}: {e}", i + 1))),
            }
        }
        let summary = summary.ok_or_else(|| EngineError::Config("report has no summary record".into()))?;
        Ok(Self { rounds, summary })
    }

    /// Loss after each round, preceded by the initial loss.
    pub fn loss_series(&self) -> Vec<f64> {
        std::iter::once(self.summary.initial_loss).chain(self.rounds.iter().map(|r| r.loss)).collect()
    }
}
