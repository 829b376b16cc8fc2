//! FedAvg mechanics on strongly convex objectives: local SGD, full and partial
//! aggregation, the diminishing learning-rate schedule and malicious noise.

mod data;
mod model;
mod noise;
mod sgd;
mod task;

pub use data::{generate_task, partition_dataset, partition_sizes, read_dataset, write_dataset, SyntheticSpec};
pub use model::ModelVec;
pub use noise::{inject_noise, NoiseMode, NoiseSpec};
pub use sgd::{aggregate_full, aggregate_partial, local_sgd, local_sgd_traced, lr_schedule};
pub use task::{ClientData, ConvexTask, Sample, TaskKind};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{clients} clients but only {samples} samples")]
    TooManyClients { clients: usize, samples: usize },
    #[error("mini-batch of {batch} from a shard of {samples} samples")]
    InvalidBatch { batch: usize, samples: usize },
    #[error("non-finite value in model or gradient")]
    NonFinite,
    #[error("aggregation over an empty responder set")]
    EmptySet,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("{0}")]
    InvalidParam(String),
    #[error("dataset parse error: {0}")]
    Parse(String),
}
