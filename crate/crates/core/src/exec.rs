//! Worker pool execution. Cells are dealt round-robin to workers; each worker
//! runs its clients one after another, the round barrier collects every
//! upload, and the server aggregates in client-id order. Client random
//! streams are keyed by client id, so results do not depend on the number of
//! workers.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ClientPhase, ClientUpload, EngineConfig, EngineError, Gather, Simulation, SimulationReport};
use crate::learning::{ConvexTask, ModelVec};
use crate::rng::replica_seed;
use crate::topology::{Role, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("cell `{0}` is not in the worker plan")]
    UnknownCell(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Cell-to-worker assignment and `(rank_id, node_id)` addresses. The server
/// is alone on rank 0; worker `w` is rank `w + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerPlan {
    pub n_workers: usize,
    pub assignment: BTreeMap<String, usize>,
    pub address: BTreeMap<String, (usize, usize)>,
}

impl WorkerPlan {
    pub fn worker_of(&self, cell: &str) -> Result<usize, ExecError> {
        self.assignment.get(cell).copied().ok_or_else(|| ExecError::UnknownCell(cell.to_string()))
    }
}

pub fn plan_partition(topology: &Topology, n_workers: usize) -> Result<WorkerPlan, ExecError> {
    if n_workers == 0 {
        return Err(ExecError::NoWorkers);
    }
    let mut members: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for agent in topology.agents() {
        if agent.role != Role::Server {
            if let Some(cell) = &agent.cell_id {
                members.entry(cell.as_str()).or_default().push(agent.id.as_str());
            }
        }
    }
    let mut assignment = BTreeMap::new();
    let mut address = BTreeMap::new();
    address.insert(topology.server_id().to_string(), (0, 0));
    let mut next_node = vec![0usize; n_workers];
    for (i, (cell, agents)) in members.iter_mut().enumerate() {
        let worker = i % n_workers;
        assignment.insert(cell.to_string(), worker);
        agents.sort_unstable();
        for id in agents.iter() {
            address.insert(id.to_string(), (worker + 1, next_node[worker]));
            next_node[worker] += 1;
        }
    }
    Ok(WorkerPlan { n_workers, assignment, address })
}

fn build_pool(n: usize) -> Result<ThreadPool, ExecError> {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| ExecError::Pool(e.to_string()))
}

/// Client phases spread over a pool by cell.
pub struct PoolGather<'p> {
    plan: &'p WorkerPlan,
    pool: &'p ThreadPool,
}

impl<'p> PoolGather<'p> {
    pub fn new(plan: &'p WorkerPlan, pool: &'p ThreadPool) -> Self {
        Self { plan, pool }
    }
}

impl Gather for PoolGather<'_> {
    fn gather(
        &self,
        phases: &mut [ClientPhase],
        scheduled: &[bool],
        task: &ConvexTask,
        config: &EngineConfig,
        model: &ModelVec,
        etas: &[f64],
        record: bool,
    ) -> Result<Vec<ClientUpload>, EngineError> {
        let mut queues: Vec<Vec<(usize, &mut ClientPhase)>> = (0..self.plan.n_workers).map(|_| Vec::new()).collect();
        for (slot, phase) in phases.iter_mut().enumerate() {
            if !scheduled[slot] {
                continue;
            }
            let worker = self
                .plan
                .worker_of(phase.cell())
                .map_err(|e| EngineError::Worker { cell: phase.cell().to_string(), message: e.to_string() })?;
            queues[worker].push((slot, phase));
        }
        let results: Vec<Result<Vec<ClientUpload>, EngineError>> = self.pool.install(|| {
            queues
                .into_par_iter()
                .map(|queue| {
                    queue
                        .into_iter()
                        .map(|(slot, phase)| {
                            phase.run(slot, task, config, model, etas, record).map_err(|e| EngineError::Worker {
                                cell: phase.cell().to_string(),
                                message: e.to_string(),
                            })
                        })
                        .collect()
                })
                .collect()
        });
        // barrier: every worker has finished; restore id order
        let mut uploads = Vec::new();
        for r in results {
            uploads.extend(r?);
        }
        uploads.sort_by_key(|u| u.slot);
        Ok(uploads)
    }
}

/// Run a simulation with the client phases of each synchronous round spread
/// over `plan.n_workers` threads. Asynchronous runs are inherently
/// sequential and execute on the calling thread.
pub fn run_parallel(
    plan: &WorkerPlan,
    topology: &Topology,
    task: &ConvexTask,
    config: &EngineConfig,
    seed: u64,
) -> Result<SimulationReport, ExecError> {
    let pool = build_pool(plan.n_workers)?;
    let sim = Simulation::new(topology, task, config.clone(), seed)?;
    Ok(sim.run_to_end(&PoolGather::new(plan, &pool))?)
}

/// Independent replicas seeded by `replica_seed(seed, i)`, run on
/// `n_workers` threads and returned in replica order.
pub fn run_replicas(
    topology: &Topology,
    task: &ConvexTask,
    config: &EngineConfig,
    seed: u64,
    replicas: usize,
    n_workers: usize,
) -> Result<Vec<SimulationReport>, ExecError> {
    if n_workers == 0 {
        return Err(ExecError::NoWorkers);
    }
    let pool = build_pool(n_workers)?;
    pool.install(|| {
        (0..replicas)
            .into_par_iter()
            .map(|i| {
                crate::engine::run_simulation(topology, task, config, replica_seed(seed, i)).map_err(ExecError::from)
            })
            .collect()
    })
}
