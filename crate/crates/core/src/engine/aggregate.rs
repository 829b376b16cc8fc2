use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::learning::{aggregate_partial, LearningError, ModelVec};

/// Server-side `Update(buffer, memory)` rule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AggregationRule {
    /// `sum p_n w_n` when every client responded; over a partial responder
    /// set the weights are renormalized to sum to one.
    #[default]
    FedavgFull,
    /// `(N / K) sum_{n in S} p_n w_n`
    FedavgPartial,
    /// The last incoming model wins.
    ReplaceLatest,
    /// `memory <- (1 - alpha) memory + alpha w` per incoming model, in order.
    RunningAverage { alpha: f64 },
}

impl AggregationRule {
    pub fn validate(&self) -> Result<(), EngineError> {
        if let AggregationRule::RunningAverage { alpha } = self {
            if !(*alpha > 0.0 && *alpha <= 1.0) {
                return Err(EngineError::Config(format!("running-average alpha must lie in (0, 1], got {alpha}")));
            }
        }
        Ok(())
    }
}

/// One upload offered to the server.
#[derive(Debug, Clone, Copy)]
pub struct Incoming<'a> {
    pub client: &'a str,
    pub weight: f64,
    pub model: &'a ModelVec,
}

/// Apply `rule` to the incoming uploads. An empty `incoming` returns
/// `buffer` unchanged.
pub fn buffer_update(
    buffer: &ModelVec,
    memory: &ModelVec,
    incoming: &[Incoming<'_>],
    rule: AggregationRule,
    n_total: usize,
) -> Result<ModelVec, EngineError> {
    if incoming.is_empty() {
        return Ok(buffer.clone());
    }
    let dim = buffer.dim();
    memory.check_dim(dim)?;
    for inc in incoming {
        inc.model.check_dim(dim)?;
        if !(inc.weight.is_finite() && inc.weight >= 0.0) {
            return Err(LearningError::InvalidWeights(format!("weight {} of `{}`", inc.weight, inc.client)).into());
        }
    }
    let pairs: Vec<(f64, &ModelVec)> = incoming.iter().map(|i| (i.weight, i.model)).collect();
    let out = match rule {
        AggregationRule::FedavgFull => {
            let sum = ModelVec::weighted_sum(dim, pairs.iter().copied())?;
            if incoming.len() >= n_total {
                sum
            } else {
                let total: f64 = pairs.iter().map(|p| p.0).sum();
                if total == 0.0 {
                    return Ok(buffer.clone());
                }
                let mut s = sum;
                s.scale(1.0 / total);
                s
            }
        }
        AggregationRule::FedavgPartial => aggregate_partial(&pairs, n_total)?,
        AggregationRule::ReplaceLatest => incoming[incoming.len() - 1].model.clone(),
        AggregationRule::RunningAverage { alpha } => {
            let mut acc = memory.clone();
            for inc in incoming {
                acc.scale(1.0 - alpha);
                acc.axpy(alpha, inc.model.as_slice());
            }
            acc
        }
    };
    out.check_finite()?;
    Ok(out)
}
