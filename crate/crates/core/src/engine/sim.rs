use std::collections::BTreeMap;

use super::report::{RoundRecord, SimulationReport, Summary};
use super::{
    buffer_update, EngineConfig, EngineError, Gate, Incoming, LrSchedule, Mode, ParticipationScale, RoundOutcome,
};
use crate::channel::{sample_link, ChannelParams, LinkSample};
use crate::learning::{inject_noise, local_sgd_traced, lr_schedule, ConvexTask, ModelVec};
use crate::metrics::{ChargeOptions, QosLedger};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::topology::{EdgeAttrs, Hop, Topology};

/// Server and client state carried between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    pub round_index: usize,
    pub server_buffer: ModelVec,
    pub server_memory: ModelVec,
    /// Latest model held by each client.
    pub client_models: BTreeMap<String, ModelVec>,
    pub clock_s: f64,
    pub mode: Mode,
    pub time_window_s: f64,
}

/// Per-client work of one round: static link data plus the client's own
/// random streams. Streams are keyed by client id, so the result of
/// [`ClientPhase::run`] does not depend on which worker executes it.
#[derive(Debug, Clone)]
pub struct ClientPhase {
    id: String,
    cell: String,
    task_index: usize,
    weight: f64,
    path: Vec<Hop>,
    packet_bits: u64,
    compute_time_s: f64,
    train_rng: SimRng,
    channel_rng: SimRng,
    noise_rng: SimRng,
}

/// A trained model and the time it took to reach the server.
#[derive(Debug, Clone)]
pub struct ClientUpload {
    pub slot: usize,
    pub model: ModelVec,
    pub link: Option<LinkSample>,
    pub upload_s: f64,
    pub compute_s: f64,
    pub visited: Vec<ModelVec>,
}

impl ClientUpload {
    pub fn arrival_s(&self) -> f64 {
        self.compute_s + self.upload_s
    }
}

impl ClientPhase {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn cell(&self) -> &str {
        &self.cell
    }

    /// Train from `model`, perturb if malicious, then draw the upload time
    /// over every hop of the uplink path.
    pub fn run(
        &mut self,
        slot: usize,
        task: &ConvexTask,
        config: &EngineConfig,
        model: &ModelVec,
        etas: &[f64],
        record: bool,
    ) -> Result<ClientUpload, EngineError> {
        let mut visited = Vec::new();
        let mut w = model.clone();
        for &eta in etas {
            w = local_sgd_traced(task, self.task_index, &w, 1, eta, config.batch, &mut self.train_rng, &mut |v| {
                if record {
                    visited.push(v.clone());
                }
            })?;
        }
        if config.noise.applies_to(&self.id) {
            w = inject_noise(&w, config.noise.mode, config.noise.nis, &mut self.noise_rng);
        }

        let mut link = None;
        let mut upload_s = 0.0;
        for hop in &self.path {
            match &hop.attrs {
                EdgeAttrs::Wireless(params) => {
                    let sample = sample_link(params, &mut self.channel_rng)?;
                    upload_s += sample.total_time_s;
                    link.get_or_insert(sample);
                }
                p2p => upload_s += p2p.p2p_time(self.packet_bits).unwrap_or(0.0),
            }
        }
        Ok(ClientUpload { slot, model: w, link, upload_s, compute_s: self.compute_time_s, visited })
    }
}

/// Runs the client phases of one synchronous round.
pub trait Gather {
    /// Run every phase whose `scheduled` flag is set from `model`, returning
    /// uploads sorted by slot.
    #[allow(clippy::too_many_arguments)]
    fn gather(
        &self,
        phases: &mut [ClientPhase],
        scheduled: &[bool],
        task: &ConvexTask,
        config: &EngineConfig,
        model: &ModelVec,
        etas: &[f64],
        record: bool,
    ) -> Result<Vec<ClientUpload>, EngineError>;
}

/// Every client in id order on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialGather;

impl Gather for SerialGather {
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
        phases
            .iter_mut()
            .enumerate()
            .filter(|(slot, _)| scheduled[*slot])
            .map(|(slot, p)| p.run(slot, task, config, model, etas, record))
            .collect()
    }
}

pub struct Simulation<'a> {
    topology: &'a Topology,
    task: &'a ConvexTask,
    config: EngineConfig,
    seed: u64,
    phases: Vec<ClientPhase>,
    state: RoundState,
    ledger: QosLedger,
    optimum: Option<(ModelVec, f64)>,
    theorem: Option<(f64, f64)>,
    last_ratio: f64,
    depleted: Vec<bool>,
    visited: Option<Vec<ModelVec>>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        topology: &'a Topology,
        task: &'a ConvexTask,
        config: EngineConfig,
        seed: u64,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let ids = topology.client_ids();
        if ids.len() != task.n_clients() {
            return Err(EngineError::Config(format!(
                "topology has {} clients but the task has {}",
                ids.len(),
                task.n_clients()
            )));
        }
        let mean_samples = task.total_samples() as f64 / task.n_clients() as f64;
        let mut phases = Vec::with_capacity(ids.len());
        for id in &ids {
            let task_index = task
                .client_index(id)
                .ok_or_else(|| EngineError::Config(format!("client `{id}` has no data in the task")))?;
            let agent = topology.agent(id)?;
            let path = topology.uplink_path(id)?;
            let packet_bits = path
                .iter()
                .find_map(|h| h.attrs.channel().map(|c| c.packet_bits))
                .unwrap_or_else(|| ChannelParams::default().packet_bits);
            let mut compute_time_s = agent.compute_time_per_epoch_s * config.e_steps as f64;
            if config.scale_compute_by_data && mean_samples > 0.0 {
                compute_time_s *= task.clients[task_index].samples.len() as f64 / mean_samples;
            }
            phases.push(ClientPhase {
                id: id.clone(),
                cell: agent.cell_id.clone().unwrap_or_default(),
                task_index,
                weight: task.weights[task_index],
                path,
                packet_bits,
                compute_time_s,
                train_rng: stream_rng(seed, id, Stream::Training),
                channel_rng: stream_rng(seed, id, Stream::Channel),
                noise_rng: stream_rng(seed, id, Stream::Noise),
            });
        }

        let w0 = match &config.initial_model {
            Some(v) => {
                let w = ModelVec::new(v.clone());
                w.check_dim(task.dim)?;
                w.check_finite()?;
                w
            }
            None => ModelVec::zeros(task.dim),
        };
        let optimum = if config.track_optimum {
            let w_star = task.optimum()?;
            let f_star = task.objective_value(&w_star)?;
            Some((w_star, f_star))
        } else {
            None
        };
        let theorem = match config.lr {
            LrSchedule::Theorem { mu, gamma, .. } => {
                let (l, mu_task) = task.curvature_bounds();
                let mu = mu.unwrap_or(mu_task);
                let gamma = gamma.unwrap_or_else(|| (8.0 * l / mu).max(config.e_steps as f64));
                lr_schedule(0, 1.0, mu, gamma)?;
                Some((mu, gamma))
            }
            LrSchedule::Constant { .. } => None,
        };

        let state = RoundState {
            round_index: 0,
            server_buffer: w0.clone(),
            server_memory: w0.clone(),
            client_models: ids.iter().map(|id| (id.clone(), w0.clone())).collect(),
            clock_s: 0.0,
            mode: config.mode,
            time_window_s: config.time_window_s,
        };
        let n = ids.len();
        Ok(Self {
            topology,
            task,
            config,
            seed,
            phases,
            state,
            ledger: QosLedger::new(ids),
            optimum,
            theorem,
            last_ratio: 1.0,
            depleted: vec![false; n],
            visited: None,
        })
    }

    pub fn state(&self) -> &RoundState {
        &self.state
    }

    pub fn ledger(&self) -> &QosLedger {
        &self.ledger
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn topology(&self) -> &Topology {
        self.topology
    }

    pub fn task(&self) -> &ConvexTask {
        self.task
    }

    pub fn optimum(&self) -> Option<&(ModelVec, f64)> {
        self.optimum.as_ref()
    }

    /// Resolved `(mu, gamma)` of the theorem schedule.
    pub fn theorem_constants(&self) -> Option<(f64, f64)> {
        self.theorem
    }

    pub fn phases(&self) -> &[ClientPhase] {
        &self.phases
    }

    /// Keep every local iterate produced from now on.
    pub fn record_iterates(&mut self) {
        self.visited.get_or_insert_with(Vec::new);
    }

    pub fn take_iterates(&mut self) -> Vec<ModelVec> {
        self.visited.take().unwrap_or_default()
    }

    /// `(F(w), F(w) - F*, |w - w*|^2)` of the committed global model.
    pub fn evaluate(&self) -> Result<(f64, Option<f64>, Option<f64>), EngineError> {
        let w = &self.state.server_memory;
        let loss = self.task.objective_value(w)?;
        Ok(match &self.optimum {
            Some((w_star, f_star)) => (loss, Some(loss - f_star), Some(w.dist_sq(w_star))),
            None => (loss, None, None),
        })
    }

    fn etas(&self, t: usize) -> Result<Vec<f64>, EngineError> {
        let e = self.config.e_steps;
        match (self.config.lr, self.theorem) {
            (LrSchedule::Theorem { participation, .. }, Some((mu, gamma))) => {
                let n = self.phases.len() as f64;
                let r = match participation {
                    ParticipationScale::None => 1.0,
                    ParticipationScale::Expected { r } => r,
                    ParticipationScale::Observed => self.last_ratio.max(1.0 / n),
                };
                (0..e)
                    .map(|i| {
                        let step = if self.config.lr_per_step { t * e + i } else { t };
                        lr_schedule(step, r, mu, gamma).map_err(EngineError::from)
                    })
                    .collect()
            }
            (LrSchedule::Constant { eta }, _) => Ok(vec![eta; e]),
            _ => unreachable!("theorem constants are resolved at construction"),
        }
    }

    fn slot_of(&self, id: &str) -> Result<usize, EngineError> {
        self.phases.binary_search_by(|p| p.id.as_str().cmp(id)).map_err(|_| EngineError::UnknownClient(id.into()))
    }

    /// One round on the calling thread.
    pub fn run_round(&mut self) -> Result<RoundOutcome, EngineError> {
        self.run_round_with(&SerialGather)
    }

    /// One round; synchronous client phases are delegated to `gather`.
    pub fn run_round_with<G: Gather + ?Sized>(&mut self, gather: &G) -> Result<RoundOutcome, EngineError> {
        let outcome = match self.config.mode {
            Mode::Sync => self.sync_round(gather)?,
            Mode::Async => self.async_round()?,
        };
        self.state.round_index += 1;
        self.commit_round(&outcome)?;
        Ok(outcome)
    }

    fn sync_round<G: Gather + ?Sized>(&mut self, gather: &G) -> Result<RoundOutcome, EngineError> {
        let t = self.state.round_index;
        let eps = self.config.time_window_s;
        let etas = self.etas(t)?;
        let scheduled: Vec<bool> = self.depleted.iter().map(|d| !d).collect();
        let record = self.visited.is_some();
        let broadcast = self.state.server_memory.clone();
        let uploads =
            gather.gather(&mut self.phases, &scheduled, self.task, &self.config, &broadcast, &etas, record)?;

        let mut outcome = RoundOutcome {
            round_index: t,
            eta: etas.first().copied().unwrap_or(0.0),
            etas: etas.clone(),
            ..Default::default()
        };
        for u in &uploads {
            let id = &self.phases[u.slot].id;
            outcome.arrivals.insert(id.clone(), u.arrival_s());
            outcome.upload_times.insert(id.clone(), u.upload_s);
            outcome.compute_times.insert(id.clone(), u.compute_s);
            if let Some(l) = u.link {
                outcome.uplink_samples.insert(id.clone(), l);
            }
        }

        // uploads are in id order, so a stable sort breaks ties by id
        let mut in_window: Vec<&ClientUpload> = uploads.iter().filter(|u| u.arrival_s() <= eps).collect();
        in_window.sort_by(|a, b| a.arrival_s().total_cmp(&b.arrival_s()));
        let late = in_window.len() < uploads.len();
        match self.config.max_responses {
            Some(k) if in_window.len() > k => {
                in_window.truncate(k);
                outcome.gate = Gate::KLimit;
            }
            _ if late => outcome.gate = Gate::Window,
            _ => {}
        }
        outcome.activated = in_window.iter().map(|u| self.phases[u.slot].id.clone()).collect();
        let mut active_slots: Vec<usize> = in_window.iter().map(|u| u.slot).collect();
        active_slots.sort_unstable();
        outcome.dropped = uploads
            .iter()
            .filter(|u| active_slots.binary_search(&u.slot).is_err())
            .map(|u| self.phases[u.slot].id.clone())
            .collect();
        outcome.round_duration_s = match outcome.gate {
            _ if uploads.is_empty() => eps,
            Gate::KLimit => in_window.last().map_or(eps, |u| u.arrival_s()),
            Gate::Window => eps,
            Gate::None => uploads.iter().map(ClientUpload::arrival_s).fold(0.0, f64::max),
        };

        let incoming: Vec<Incoming> = uploads
            .iter()
            .filter(|u| active_slots.binary_search(&u.slot).is_ok())
            .map(|u| Incoming { client: &self.phases[u.slot].id, weight: self.phases[u.slot].weight, model: &u.model })
            .collect();
        outcome.empty_activation = incoming.is_empty();
        let buffer = buffer_update(
            &self.state.server_buffer,
            &self.state.server_memory,
            &incoming,
            self.config.aggregation,
            self.phases.len(),
        )?;
        buffer.check_finite()?;
        self.state.server_memory = buffer.clone();
        self.state.server_buffer = buffer;

        for u in uploads {
            if let Some(v) = self.visited.as_mut() {
                v.extend(u.visited);
            }
            let id = self.phases[u.slot].id.clone();
            self.state.client_models.insert(id, u.model);
        }
        Ok(outcome)
    }

    /// One asynchronous exchange: `client` trains from the last model it
    /// received; an in-window upload is merged into memory with the async
    /// rule and the result is returned to that client only. Does not touch
    /// the QoS ledger or the round index.
    pub fn async_step(&mut self, client: &str) -> Result<RoundOutcome, EngineError> {
        if self.config.mode != Mode::Async {
            return Err(EngineError::ModeMismatch { expected: Mode::Async });
        }
        let slot = self.slot_of(client)?;
        let t = self.state.round_index;
        let etas = self.etas(t)?;
        let start = self.state.client_models[client].clone();
        let record = self.visited.is_some();
        let upload = self.phases[slot].run(slot, self.task, &self.config, &start, &etas, record)?;
        if let Some(v) = self.visited.as_mut() {
            v.extend(upload.visited.iter().cloned());
        }

        let eps = self.config.time_window_s;
        let id = client.to_string();
        let mut outcome = RoundOutcome {
            round_index: t,
            eta: etas.first().copied().unwrap_or(0.0),
            etas: etas.clone(),
            ..Default::default()
        };
        outcome.arrivals.insert(id.clone(), upload.arrival_s());
        outcome.upload_times.insert(id.clone(), upload.upload_s);
        outcome.compute_times.insert(id.clone(), upload.compute_s);
        if let Some(l) = upload.link {
            outcome.uplink_samples.insert(id.clone(), l);
        }
        if upload.arrival_s() <= eps {
            let incoming = [Incoming { client, weight: self.phases[slot].weight, model: &upload.model }];
            let buffer = buffer_update(
                &self.state.server_buffer,
                &self.state.server_memory,
                &incoming,
                self.config.async_rule,
                self.phases.len(),
            )?;
            self.state.server_memory = buffer.clone();
            self.state.client_models.insert(id.clone(), buffer.clone());
            self.state.server_buffer = buffer;
            outcome.activated.push(id);
            outcome.round_duration_s = upload.arrival_s();
        } else {
            outcome.dropped.push(id);
            outcome.gate = Gate::Window;
            outcome.empty_activation = true;
            outcome.round_duration_s = eps;
        }
        self.state.clock_s += outcome.round_duration_s;
        Ok(outcome)
    }

    /// Round-robin sweep of [`Simulation::async_step`] over clients in id order.
    fn async_round(&mut self) -> Result<RoundOutcome, EngineError> {
        let t = self.state.round_index;
        let clock0 = self.state.clock_s;
        let mut round = RoundOutcome { round_index: t, ..Default::default() };
        let ids: Vec<String> =
            self.phases.iter().zip(&self.depleted).filter(|(_, d)| !**d).map(|(p, _)| p.id.clone()).collect();
        let mut elapsed = 0.0;
        for id in &ids {
            let step = self.async_step(id)?;
            round.eta = step.eta;
            round.etas = step.etas;
            for (k, v) in step.arrivals {
                round.arrivals.insert(k, elapsed + v);
            }
            round.upload_times.extend(step.upload_times);
            round.compute_times.extend(step.compute_times);
            round.uplink_samples.extend(step.uplink_samples);
            round.activated.extend(step.activated);
            round.dropped.extend(step.dropped);
            if step.gate == Gate::Window {
                round.gate = Gate::Window;
            }
            elapsed += step.round_duration_s;
        }
        round.dropped.sort();
        round.empty_activation = round.activated.is_empty();
        round.round_duration_s = if ids.is_empty() { self.config.time_window_s } else { elapsed };
        // async_step advanced the clock per exchange; restate it as one sum
        self.state.clock_s = clock0;
        Ok(round)
    }

    fn commit_round(&mut self, outcome: &RoundOutcome) -> Result<(), EngineError> {
        self.state.clock_s += outcome.round_duration_s;
        let opts = ChargeOptions {
            dropped_airtime: self.config.dropped_airtime,
            time_window_s: self.config.time_window_s,
            downlink_energy: self.config.downlink_energy,
        };
        self.ledger.charge_round(outcome, self.topology, &opts)?;
        self.last_ratio = outcome.participation(self.phases.len());
        if self.config.enforce_battery {
            for (slot, p) in self.phases.iter().enumerate() {
                if let Some(b) = self.topology.agent(&p.id)?.battery_j {
                    if self.ledger.energy_j.get(&p.id).copied().unwrap_or(0.0) >= b {
                        self.depleted[slot] = true;
                    }
                }
            }
        }
        Ok(())
    }

    fn termination_reason(&self, loss: f64, gap: Option<f64>, dist: Option<f64>) -> Option<&'static str> {
        let term = &self.config.termination;
        if let Some(target) = &term.target {
            let value = match target.metric {
                super::Metric::Loss => Some(loss),
                super::Metric::Gap => gap,
                super::Metric::DistSq => dist,
            };
            if value.is_some_and(|v| target.comparator.holds(v, target.threshold)) {
                return Some("target");
            }
        }
        if term.max_rounds.is_some_and(|m| self.state.round_index >= m) {
            return Some("max_rounds");
        }
        if term.max_sim_time_s.is_some_and(|m| self.state.clock_s >= m) {
            return Some("max_sim_time");
        }
        if term.max_energy_j.is_some_and(|m| self.ledger.total_energy_j >= m) {
            return Some("max_energy");
        }
        None
    }

    /// Run rounds until a termination condition fires.
    pub fn run_to_end<G: Gather + ?Sized>(mut self, gather: &G) -> Result<SimulationReport, EngineError> {
        let (loss0, gap0, dist0) = self.evaluate()?;
        let mut rounds = Vec::new();
        let (mut loss, mut gap, mut dist) = (loss0, gap0, dist0);
        let terminated_by = loop {
            if let Some(reason) = self.termination_reason(loss, gap, dist) {
                break reason;
            }
            let outcome = self.run_round_with(gather)?;
            (loss, gap, dist) = self.evaluate()?;
            rounds.push(RoundRecord::new(&outcome, &self.ledger, self.phases.len(), loss, gap, dist));
        };
        let summary = Summary {
            seed: self.seed,
            mode: self.config.mode,
            n_clients: self.phases.len(),
            rounds: rounds.len(),
            terminated_by: terminated_by.to_string(),
            initial_loss: loss0,
            initial_gap: gap0,
            initial_dist_sq: dist0,
            final_loss: loss,
            final_gap: gap,
            final_dist_sq: dist,
            f_star: self.optimum.as_ref().map(|o| o.1),
            total_energy_j: self.ledger.total_energy_j,
            total_time_s: self.state.clock_s,
            bits_attempted: self.ledger.bits_attempted,
            bits_delivered: self.ledger.bits_delivered,
            packets_lost: self.ledger.packets_lost,
            mean_throughput_bps: if self.state.clock_s > 0.0 {
                self.ledger.bits_delivered as f64 / self.state.clock_s
            } else {
                0.0
            },
            per_agent_energy_j: self.ledger.energy_j.clone(),
            fairness_ratio: self.ledger.fairness_ratio().ok(),
            final_model: self.state.server_memory.as_slice().to_vec(),
        };
        Ok(SimulationReport { rounds, summary })
    }
}

/// Run a whole simulation serially.
pub fn run_simulation(
    topology: &Topology,
    task: &ConvexTask,
    config: &EngineConfig,
    seed: u64,
) -> Result<SimulationReport, EngineError> {
    Simulation::new(topology, task, config.clone(), seed)?.run_to_end(&SerialGather)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{response_pmf_homogeneous, ChannelParams};
    use crate::engine::{AggregationRule, Comparator, Metric, TargetMetric, TerminationSpec};
    use crate::learning::{ClientData, NoiseMode, NoiseSpec, Sample, TaskKind};
    use crate::topology::{AgentSpec, Role};

    /// Clients wired straight to the server with deterministic latencies.
    fn star(latencies: &[f64], per: f64) -> Topology {
        let mut agents = vec![AgentSpec::new("server", Role::Server)];
        for (i, l) in latencies.iter().enumerate() {
            let mut c = AgentSpec::new(format!("c{i:02}"), Role::Client);
            c.cell_id = Some("cell0".into());
            c.adj.insert("server".into(), EdgeAttrs::Wireless(ChannelParams::deterministic_with_latency(*l, per)));
            agents.push(c);
        }
        Topology::from_agents(agents).unwrap()
    }

    fn ridge(n: usize, per_client: usize) -> ConvexTask {
        let clients = (0..n)
            .map(|i| ClientData {
                id: format!("c{i:02}"),
                samples: (0..per_client)
                    .map(|j| {
                        let a = (i * 7 + j * 3) as f64 * 0.37;
                        Sample { x: vec![a.sin(), a.cos()], y: (a * 1.3).sin() + i as f64 * 0.2 }
                    })
                    .collect(),
            })
            .collect();
        ConvexTask::new(TaskKind::RidgeQuadratic, 2, 0.1, clients, None).unwrap()
    }

    fn cfg(rounds: usize) -> EngineConfig {
        EngineConfig { termination: TerminationSpec::rounds(rounds), downlink_energy: false, ..Default::default() }
    }

    #[test]
    fn identity_trainer_is_a_fixed_point() {
        let topo = star(&[0.1], 0.0);
        let task = ridge(1, 4);
        let config = EngineConfig { e_steps: 0, initial_model: Some(vec![0.3, -0.7]), ..cfg(1) };
        let mut sim = Simulation::new(&topo, &task, config, 1).unwrap();
        let out = sim.run_round().unwrap();
        assert_eq!(out.activated, vec!["c00"]);
        assert_eq!(sim.state().server_memory.as_slice(), &[0.3, -0.7]);
    }

    #[test]
    fn window_gating() {
        let topo = star(&[0.1, 0.2, 2.0, 3.0], 0.0);
        let task = ridge(4, 4);
        let mut sim = Simulation::new(&topo, &task, cfg(1), 1).unwrap();
        let out = sim.run_round().unwrap();
        assert_eq!(out.activated, vec!["c00", "c01"]);
        assert_eq!(out.dropped, vec!["c02", "c03"]);
        assert_eq!(out.gate, Gate::Window);
        assert_eq!(out.round_duration_s, 1.0);
        assert_eq!(sim.state().server_memory, sim.state().server_buffer);
    }

    #[test]
    fn arrival_order_and_ties() {
        let topo = star(&[0.5, 0.2, 0.2, 0.1], 0.0);
        let task = ridge(4, 4);
        let mut sim = Simulation::new(&topo, &task, cfg(1), 1).unwrap();
        let out = sim.run_round().unwrap();
        assert_eq!(out.activated, vec!["c03", "c01", "c02", "c00"]);
        assert_eq!(out.gate, Gate::None);
        assert_eq!(out.round_duration_s, 0.5);
    }

    #[test]
    fn k_limit_binds_before_window() {
        let topo = star(&[0.5, 0.2, 0.3, 3.0], 0.0);
        let task = ridge(4, 4);
        let config = EngineConfig { max_responses: Some(2), ..cfg(1) };
        let mut sim = Simulation::new(&topo, &task, config, 1).unwrap();
        let out = sim.run_round().unwrap();
        assert_eq!(out.activated, vec!["c01", "c02"]);
        assert_eq!(out.dropped, vec!["c00", "c03"]);
        assert_eq!(out.gate, Gate::KLimit);
        assert_eq!(out.round_duration_s, 0.3);
    }

    #[test]
    fn empty_activation_commits_unchanged_buffer() {
        let topo = star(&[2.0, 3.0], 0.0);
        let task = ridge(2, 4);
        let config = EngineConfig { initial_model: Some(vec![1.0, 2.0]), ..cfg(3) };
        let report = run_simulation(&topo, &task, &config, 5).unwrap();
        assert_eq!(report.rounds.len(), 3);
        assert!(report.rounds.iter().all(|r| r.warning.is_some() && r.n_activated == 0));
        assert_eq!(report.summary.final_model, vec![1.0, 2.0]);
        assert_eq!(report.summary.total_time_s, 3.0);
    }

    #[test]
    fn zero_rounds() {
        let topo = star(&[0.1], 0.0);
        let task = ridge(1, 4);
        let report = run_simulation(&topo, &task, &cfg(0), 1).unwrap();
        assert!(report.rounds.is_empty());
        assert_eq!(report.summary.terminated_by, "max_rounds");
    }

    #[test]
    fn target_met_by_initial_model() {
        let topo = star(&[0.1], 0.0);
        let task = ridge(1, 4);
        let config = EngineConfig {
            termination: TerminationSpec {
                max_rounds: Some(50),
                target: Some(TargetMetric { metric: Metric::Loss, comparator: Comparator::Le, threshold: 1e9 }),
                ..Default::default()
            },
            ..cfg(0)
        };
        let report = run_simulation(&topo, &task, &config, 1).unwrap();
        assert!(report.rounds.is_empty());
        assert_eq!(report.summary.terminated_by, "target");
    }

    #[test]
    fn time_and_energy_limits() {
        let topo = star(&[0.25, 0.25], 0.0);
        let task = ridge(2, 4);
        let config =
            EngineConfig { termination: TerminationSpec { max_sim_time_s: Some(1.0), ..Default::default() }, ..cfg(0) };
        let report = run_simulation(&topo, &task, &config, 1).unwrap();
        assert_eq!(report.rounds.len(), 4);
        assert_eq!(report.summary.terminated_by, "max_sim_time");

        let config = EngineConfig {
            termination: TerminationSpec { max_energy_j: Some(f64::MIN_POSITIVE), ..Default::default() },
            ..cfg(0)
        };
        let report = run_simulation(&topo, &task, &config, 1).unwrap();
        assert_eq!(report.rounds.len(), 1);
        assert_eq!(report.summary.terminated_by, "max_energy");
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let topo = star(&[0.2, 0.4, 0.6], 0.3);
        let task = ridge(3, 6);
        let config = EngineConfig { e_steps: 3, batch: 2, ..cfg(20) };
        let a = run_simulation(&topo, &task, &config, 11).unwrap().to_jsonl();
        let b = run_simulation(&topo, &task, &config, 11).unwrap().to_jsonl();
        let c = run_simulation(&topo, &task, &config, 12).unwrap().to_jsonl();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn training_reduces_loss() {
        let topo = star(&[0.1, 0.1, 0.1], 0.0);
        let task = ridge(3, 8);
        let config = EngineConfig { e_steps: 2, batch: 4, lr: LrSchedule::Constant { eta: 0.2 }, ..cfg(200) };
        let report = run_simulation(&topo, &task, &config, 2).unwrap();
        assert!(report.summary.final_gap.unwrap() < 0.05 * report.summary.initial_gap.unwrap());
    }

    #[test]
    fn activation_counts_follow_binomial() {
        // L <= eps < 2L: a client is in time iff its first attempt succeeds
        let n = 20;
        let topo = star(&vec![0.6; n], 0.3);
        let task = ridge(n, 2);
        let config = EngineConfig { e_steps: 0, track_optimum: false, ..cfg(0) };
        let mut sim = Simulation::new(&topo, &task, config, 3).unwrap();
        let mut counts = vec![0usize; n + 1];
        let rounds = 4000;
        for _ in 0..rounds {
            counts[sim.run_round().unwrap().activated.len()] += 1;
        }
        let emp: Vec<f64> = counts.iter().map(|c| *c as f64 / rounds as f64).collect();
        let tv = response_pmf_homogeneous(n, 0.7).total_variation(&emp);
        assert!(tv < 0.04, "tv = {tv}");
    }

    #[test]
    fn async_requires_async_mode() {
        let topo = star(&[0.1], 0.0);
        let task = ridge(1, 4);
        let mut sim = Simulation::new(&topo, &task, cfg(1), 1).unwrap();
        assert_eq!(sim.async_step("c00"), Err(EngineError::ModeMismatch { expected: Mode::Async }));
    }

    #[test]
    fn async_replace_rule() {
        let topo = star(&[0.1], 0.0);
        let task = ridge(1, 4);
        let config = EngineConfig {
            mode: Mode::Async,
            async_rule: AggregationRule::ReplaceLatest,
            e_steps: 2,
            batch: 2,
            ..cfg(1)
        };
        let mut sim = Simulation::new(&topo, &task, config, 4).unwrap();
        sim.async_step("c00").unwrap();
        assert_eq!(sim.state().server_memory, sim.state().client_models["c00"]);
        assert_ne!(sim.state().server_memory, ModelVec::zeros(2));
        assert!(matches!(sim.async_step("nobody"), Err(EngineError::UnknownClient(_))));
    }

    #[test]
    fn async_running_average_recursion() {
        let topo = star(&[0.1, 0.1], 0.0);
        let task = ridge(2, 4);
        let config = EngineConfig {
            mode: Mode::Async,
            e_steps: 1,
            batch: 4,
            lr: LrSchedule::Constant { eta: 0.5 },
            initial_model: Some(vec![1.0, -1.0]),
            ..cfg(1)
        };
        let m0 = ModelVec::new(vec![1.0, -1.0]);
        // each client trains from m0 with its full batch; reproduce by hand
        let mut expect_models = Vec::new();
        for k in 0..2 {
            let mut rng = stream_rng(9, &format!("c{k:02}"), Stream::Training);
            let w = local_sgd_traced(&task, k, &m0, 1, 0.5, 4, &mut rng, &mut |_| {}).unwrap();
            expect_models.push(w);
        }
        let mut sim = Simulation::new(&topo, &task, config, 9).unwrap();
        sim.run_round().unwrap();
        let (a, b) = (&expect_models[0], &expect_models[1]);
        for i in 0..2 {
            let want = 0.5 * (0.5 * (m0[i] + a[i])) + 0.5 * b[i];
            assert!((sim.state().server_memory[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn async_matches_sync_for_one_static_client() {
        let topo = star(&[0.1], 0.0);
        let task = ridge(1, 4);
        let base = EngineConfig { e_steps: 0, initial_model: Some(vec![0.25, 4.0]), ..cfg(3) };
        let sync = run_simulation(&topo, &task, &base, 1).unwrap();
        let asy = run_simulation(&topo, &task, &EngineConfig { mode: Mode::Async, ..base }, 1).unwrap();
        assert_eq!(sync.summary.final_model, asy.summary.final_model);
    }

    #[test]
    fn async_drop_keeps_memory() {
        let topo = star(&[5.0], 0.0);
        let task = ridge(1, 4);
        let config = EngineConfig { mode: Mode::Async, initial_model: Some(vec![1.0, 1.0]), ..cfg(2) };
        let report = run_simulation(&topo, &task, &config, 1).unwrap();
        assert_eq!(report.summary.final_model, vec![1.0, 1.0]);
        assert_eq!(report.summary.total_time_s, 2.0);
    }

    #[test]
    fn noise_only_touches_malicious_uploads() {
        let topo = star(&[0.1, 0.1], 0.0);
        let task = ridge(2, 4);
        let base = cfg(5);
        let clean = run_simulation(&topo, &task, &base, 3).unwrap();
        let zero = EngineConfig {
            noise: NoiseSpec { mode: NoiseMode::Additive, nis: 0.0, malicious_ids: ["c01".to_string()].into() },
            ..base.clone()
        };
        assert_eq!(run_simulation(&topo, &task, &zero, 3).unwrap().to_jsonl(), clean.to_jsonl());
        let noisy = EngineConfig {
            noise: NoiseSpec { mode: NoiseMode::Additive, nis: 0.5, malicious_ids: ["c01".to_string()].into() },
            ..base
        };
        assert_ne!(run_simulation(&topo, &task, &noisy, 3).unwrap().summary.final_model, clean.summary.final_model);
    }

    #[test]
    fn theorem_schedule_resolution() {
        let topo = star(&[0.1], 0.0);
        let task = ridge(1, 4);
        let config = EngineConfig {
            lr: LrSchedule::Theorem { mu: Some(2.0), gamma: Some(8.0), participation: ParticipationScale::None },
            ..cfg(1)
        };
        let mut sim = Simulation::new(&topo, &task, config, 1).unwrap();
        assert_eq!(sim.run_round().unwrap().eta, 0.125);

        let config = EngineConfig {
            lr: LrSchedule::Theorem { mu: None, gamma: None, participation: ParticipationScale::Expected { r: 0.5 } },
            e_steps: 5,
            batch: 1,
            ..cfg(1)
        };
        let sim = Simulation::new(&topo, &task, config, 1).unwrap();
        let (l, mu) = task.curvature_bounds();
        let (mu_r, gamma) = sim.theorem_constants().unwrap();
        assert_eq!(mu_r, mu);
        assert_eq!(gamma, (8.0 * l / mu).max(5.0));
        assert_eq!(sim.etas(0).unwrap()[0], 2.0 * 0.5 / (mu * gamma));
    }

    #[test]
    fn battery_depletion_stops_scheduling() {
        let mut agents = vec![AgentSpec::new("server", Role::Server)];
        for i in 0..2 {
            let mut c = AgentSpec::new(format!("c{i:02}"), Role::Client);
            c.cell_id = Some("cell0".into());
            c.battery_j = Some(if i == 0 { 0.5 } else { 100.0 });
            c.compute_power_w = 1.0;
            c.compute_time_per_epoch_s = 0.3;
            c.adj.insert("server".into(), EdgeAttrs::Wireless(ChannelParams::deterministic_with_latency(0.4, 0.0)));
            agents.push(c);
        }
        let topo = Topology::from_agents(agents).unwrap();
        let task = ridge(2, 4);
        let config = EngineConfig { enforce_battery: true, ..cfg(3) };
        let mut sim = Simulation::new(&topo, &task, config, 1).unwrap();
        for _ in 0..3 {
            sim.run_round().unwrap();
        }
        let out = sim.run_round().unwrap();
        assert!(!out.arrivals.contains_key("c00"));
        assert!(out.arrivals.contains_key("c01"));
    }

    #[test]
    fn mismatched_task_is_a_config_error() {
        let topo = star(&[0.1, 0.1], 0.0);
        let task = ridge(1, 4);
        assert!(matches!(Simulation::new(&topo, &task, cfg(1), 1), Err(EngineError::Config(_))));
    }
}
