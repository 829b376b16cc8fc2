//! Run configuration: a JSON document whose relative paths resolve against
//! the directory containing it.

use std::path::{Path, PathBuf};

use flsim::engine::EngineConfig;
use flsim::learning::{generate_task, read_dataset, ConvexTask, SyntheticSpec};
use flsim::topology::Topology;
use serde::Deserialize;

use crate::error::CliError;
use crate::sweep::SweepSpec;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub topology: Option<PathBuf>,
    /// Synthetic task parameters. With `dataset` set, only `kind` and
    /// `lambda` are used.
    #[serde(default)]
    pub task: SyntheticSpec,
    /// CSV samples as written by `run` (`client,y,x0,..`).
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub engine: EngineConfig,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub replicas: Option<usize>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    pub out: Option<PathBuf>,
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Check the bounds after a replicated `run`.
    pub enabled: bool,
    /// Relative inflation of the measured gradient constants.
    pub margin: f64,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self { enabled: false, margin: 0.2 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub topology: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub replicas: Option<usize>,
    pub enforce_battery: bool,
}

/// A configuration with overrides applied and every path resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub topology_path: PathBuf,
    pub dataset_path: Option<PathBuf>,
    pub task: SyntheticSpec,
    pub engine: EngineConfig,
    pub seed: u64,
    pub workers: usize,
    pub replicas: usize,
    pub analysis: AnalysisSpec,
    pub out: PathBuf,
    pub sweep: Option<SweepSpec>,
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

pub fn load(config_path: &Path, over: &Overrides) -> Result<Resolved, CliError> {
    let text = read_text(config_path)?;
    let raw: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", config_path.display())))?;
    let base = config_path.parent().unwrap_or(Path::new(""));
    let topology_path = match (&over.topology, &raw.topology) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => base.join(p),
        (None, None) => return Err(CliError::config("no topology given (config `topology` or --topology)")),
    };
    if !topology_path.is_file() {
        return Err(CliError::config(format!("topology file {} does not exist", topology_path.display())));
    }
    let dataset_path = raw.dataset.as_ref().map(|p| base.join(p));
    if let Some(p) = &dataset_path {
        if !p.is_file() {
            return Err(CliError::config(format!("dataset file {} does not exist", p.display())));
        }
    }
    let seed =
        over.seed.or(raw.seed).ok_or_else(|| CliError::config("a seed is required (config `seed` or --seed)"))?;
    let workers = over.workers.or(raw.workers).unwrap_or(1);
    if workers == 0 {
        return Err(CliError::config("workers must be at least 1"));
    }
    let replicas = over.replicas.or(raw.replicas).unwrap_or(1);
    if replicas == 0 {
        return Err(CliError::config("replicas must be at least 1"));
    }
    let mut engine = raw.engine;
    engine.enforce_battery |= over.enforce_battery;
    engine.validate()?;
    let out = match (&over.out, &raw.out) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => base.join(p),
        (None, None) => PathBuf::from("out"),
    };
    Ok(Resolved {
        topology_path,
        dataset_path,
        task: raw.task,
        engine,
        seed,
        workers,
        replicas,
        analysis: raw.analysis,
        out,
        sweep: raw.sweep,
    })
}

impl Resolved {
    pub fn topology(&self) -> Result<Topology, CliError> {
        Ok(Topology::parse(&read_text(&self.topology_path)?)?)
    }

    /// The task for `topology`: the dataset file when given, otherwise a
    /// synthetic task generated from the run seed.
    pub fn build_task(&self, topology: &Topology, spec: &SyntheticSpec) -> Result<ConvexTask, CliError> {
        match &self.dataset_path {
            Some(path) => {
                let (dim, clients) = read_dataset(&read_text(path)?)?;
                Ok(ConvexTask::new(spec.kind, dim, spec.lambda, clients, None)?)
            }
            None => Ok(generate_task(spec, &topology.client_ids(), self.seed)?),
        }
    }
}
