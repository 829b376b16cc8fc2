use std::path::Path;

use flsim::analysis::AnalysisError;
use flsim::engine::EngineError;
use flsim::exec::ExecError;
use flsim::learning::LearningError;
use flsim::topology::TopologyError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    // 2 is used by clap for usage errors
    pub const CONFIG: u8 = 3;
    pub const RUNTIME: u8 = 4;
    pub const VERDICT: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid or unreadable configuration, topology, dataset or report.
    #[error("{0}")]
    Config(String),
    /// A simulation or analysis failed while running.
    #[error("{0}")]
    Runtime(String),
    /// The analysis ran but at least one bound check failed.
    #[error("{0}")]
    Verdict(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Runtime(_) => exit::RUNTIME,
            CliError::Verdict(_) => exit::VERDICT,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn read(path: &Path, e: std::io::Error) -> Self {
        CliError::Config(format!("cannot read {}: {e}", path.display()))
    }

    pub fn write(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("cannot write {}: {e}", path.display()))
    }
}

impl From<TopologyError> for CliError {
    fn from(e: TopologyError) -> Self {
        CliError::Config(format!("topology: {e}"))
    }
}

impl From<LearningError> for CliError {
    fn from(e: LearningError) -> Self {
        CliError::Config(format!("task: {e}"))
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) | EngineError::Topology(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Engine(inner) => inner.into(),
            ExecError::NoWorkers | ExecError::UnknownCell(_) => CliError::Config(e.to_string()),
            ExecError::Pool(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Engine(inner) => inner.into(),
            AnalysisError::InsufficientReplicas(_) | AnalysisError::ReplicaMismatch(_) => {
                CliError::Config(format!("analysis input: {e}"))
            }
            other => CliError::Runtime(format!("analysis: {other}")),
        }
    }
}
