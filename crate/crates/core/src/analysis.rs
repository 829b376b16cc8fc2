//! Convergence constants and bounds for FedAvg on strongly convex tasks, and
//! checks of the one-step inequality and the final-gap bound against
//! replica-averaged simulation traces.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineConfig, EngineError, LrSchedule, Simulation, SimulationReport};
use crate::learning::{ConvexTask, LearningError, ModelVec};
use crate::rng::{stream_rng, Stream};
use crate::topology::Topology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{0}")]
    InvalidParam(String),
    #[error("F* = {f_star} is below sum p_k F_k* = {weighted}")]
    Inconsistent { f_star: f64, weighted: f64 },
    #[error("responder count {n_tilde} outside [1, {n}]")]
    NTildeOutOfRange { n_tilde: usize, n: usize },
    #[error("at least two replicas are needed, got {0}")]
    InsufficientReplicas(usize),
    #[error("replica reports disagree: {0}")]
    ReplicaMismatch(String),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    pub l_smooth: f64,
    pub mu: f64,
    pub sigma_k: Vec<f64>,
    pub g_bound: f64,
    pub e_local: usize,
    pub p: Vec<f64>,
    pub n_clients: usize,
    pub gamma_het: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl ConvergenceParams {
    /// Derives `kappa = L / mu` and `gamma = max(8 kappa, E)`.
    pub fn new(
        l_smooth: f64,
        mu: f64,
        sigma_k: Vec<f64>,
        g_bound: f64,
        e_local: usize,
        p: Vec<f64>,
        gamma_het: f64,
    ) -> Result<Self, AnalysisError> {
        let bad = |m: String| Err(AnalysisError::InvalidParam(m));
        if !(mu > 0.0 && mu.is_finite()) || !(l_smooth.is_finite() && l_smooth >= mu) {
            return bad(format!("need 0 < mu <= L, got mu = {mu}, L = {l_smooth}"));
        }
        if e_local == 0 {
            return bad("E must be at least 1".into());
        }
        if sigma_k.len() != p.len() || p.is_empty() {
            return bad(format!("{} sigmas for {} weights", sigma_k.len(), p.len()));
        }
        if sigma_k.iter().chain(&p).chain([&g_bound, &gamma_het]).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("sigmas, weights, G and Gamma must be finite and nonnegative".into());
        }
        let kappa = l_smooth / mu;
        Ok(Self {
            l_smooth,
            mu,
            n_clients: p.len(),
            sigma_k,
            g_bound,
            e_local,
            p,
            gamma_het,
            kappa,
            gamma: (8.0 * kappa).max(e_local as f64),
        })
    }
}

/// `Gamma = F* - sum p_k F_k*`, floored at zero.
pub fn gamma_het(f_star: f64, f_k_stars: &[f64], p: &[f64]) -> Result<f64, AnalysisError> {
    if f_k_stars.len() != p.len() {
        return Err(AnalysisError::InvalidParam(format!("{} minima for {} weights", f_k_stars.len(), p.len())));
    }
    let weighted: f64 = f_k_stars.iter().zip(p).filter(|(_, w)| **w != 0.0).map(|(f, w)| f * w).sum();
    if f_star < weighted - 1e-12 {
        return Err(AnalysisError::Inconsistent { f_star, weighted });
    }
    Ok((f_star - weighted).max(0.0))
}

/// `B = sum p_k^2 sigma_k^2 + 6 L Gamma + 8 (E - 1)^2 G^2`
pub fn compute_b(params: &ConvergenceParams) -> f64 {
    let noise: f64 = params.p.iter().zip(&params.sigma_k).map(|(p, s)| p * p * s * s).sum();
    let e1 = params.e_local as f64 - 1.0;
    noise + 6.0 * params.l_smooth * params.gamma_het + 8.0 * e1 * e1 * params.g_bound * params.g_bound
}

/// `C_t = (N - n) / (N - 1) * 4 / n * E^2 G^2`, zero for a single client.
pub fn compute_c(params: &ConvergenceParams, n_tilde: usize) -> Result<f64, AnalysisError> {
    let n = params.n_clients;
    if n_tilde == 0 || n_tilde > n {
        return Err(AnalysisError::NTildeOutOfRange { n_tilde, n });
    }
    if n == 1 {
        return Ok(0.0);
    }
    let e = params.e_local as f64;
    let g = params.g_bound;
    Ok((n - n_tilde) as f64 / (n - 1) as f64 * 4.0 / n_tilde as f64 * e * e * g * g)
}

/// `D = 4 E^2 G^2`, the largest value of `C_t`.
pub fn compute_d(params: &ConvergenceParams) -> f64 {
    let e = params.e_local as f64;
    4.0 * e * e * params.g_bound * params.g_bound
}

/// `C_t` with an empty responder set mapped to its upper bound `D`.
pub fn c_or_d(params: &ConvergenceParams, n_tilde: usize) -> f64 {
    if n_tilde == 0 {
        compute_d(params)
    } else {
        compute_c(params, n_tilde.min(params.n_clients)).unwrap_or_else(|_| compute_d(params))
    }
}

/// `2 kappa / (gamma + t) * ((B + D) / mu + 2 L delta0)`
pub fn theorem_bound(params: &ConvergenceParams, t: usize, delta0: f64) -> f64 {
    gap_bound(params, compute_b(params) + compute_d(params), t, delta0)
}

/// The full-participation form, with `B` in place of `B + D`.
pub fn theorem_bound_full(params: &ConvergenceParams, t: usize, delta0: f64) -> f64 {
    gap_bound(params, compute_b(params), t, delta0)
}

fn gap_bound(params: &ConvergenceParams, b: f64, t: usize, delta0: f64) -> f64 {
    2.0 * params.kappa / (params.gamma + t as f64) * (b / params.mu + 2.0 * params.l_smooth * delta0)
}

/// `d_{t+1} = d_t - mu^2 d_t^2 / (4 (B + C_t))`, clamped at zero. Returns
/// `c_seq.len() + 1` values starting at `delta0`.
pub fn supremum_recursion(delta0: f64, mu: f64, b: f64, c_seq: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(c_seq.len() + 1);
    let mut d = delta0.max(0.0);
    out.push(d);
    for c in c_seq {
        let denom = 4.0 * (b + c);
        d = if denom > 0.0 { (d - mu * mu * d * d / denom).max(0.0) } else { 0.0 };
        out.push(d);
    }
    out
}

/// `eta_t = r_t * eta_bar_t`
pub fn lemma2_rate(base_eta: f64, r_t: f64) -> Result<f64, AnalysisError> {
    if !(r_t > 0.0 && r_t <= 1.0) {
        return Err(AnalysisError::InvalidParam(format!("participation ratio must lie in (0, 1], got {r_t}")));
    }
    Ok(r_t * base_eta)
}

/// Where gradient statistics are measured.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRegion {
    /// Iterates of a calibration run; the optimum is always added.
    pub points: Vec<ModelVec>,
    /// Relative inflation applied to the measured `sigma_k` and `G`.
    pub margin: f64,
    /// Mini-batch size of the stochastic gradients.
    pub batch: usize,
    /// Monte-Carlo batch draws per point; exact moments when absent.
    pub draws: Option<usize>,
}

impl ProbeRegion {
    pub fn new(points: Vec<ModelVec>, batch: usize) -> Self {
        Self { points, margin: 0.2, batch, draws: None }
    }
}

/// `(E|g_batch - g|^2, |g|^2)` of client `k` at `w`.
fn gradient_moments<R: Rng + ?Sized>(
    task: &ConvexTask,
    k: usize,
    w: &ModelVec,
    batch: usize,
    draws: Option<usize>,
    rng: &mut R,
) -> Result<(f64, f64), AnalysisError> {
    let s = task.clients[k].samples.len();
    let full = task.client_grad(k, w)?;
    if s == 0 {
        return Ok((0.0, full.norm_sq()));
    }
    let var = match draws {
        None => {
            // batches are drawn with replacement, so the variance is the
            // per-sample variance divided by the batch size
            let per_sample: f64 = (0..s).map(|j| task.sample_grad(k, j, w).dist_sq(&full)).sum::<f64>() / s as f64;
            per_sample / batch as f64
        }
        Some(m) => {
            let mut idx = vec![0usize; batch];
            let mut acc = 0.0;
            for _ in 0..m.max(1) {
                for slot in idx.iter_mut() {
                    *slot = rng.random_range(0..s);
                }
                acc += task.batch_grad(k, w, &idx).dist_sq(&full);
            }
            acc / m.max(1) as f64
        }
    };
    Ok((var, full.norm_sq()))
}

/// Constants of the convergence analysis for `task` run with `e_local`
/// local steps. Curvature comes from the task; `sigma_k` and `G` are the
/// largest gradient moments over the probe region, inflated by its margin.
pub fn estimate_constants<R: Rng + ?Sized>(
    task: &ConvexTask,
    e_local: usize,
    probe: &ProbeRegion,
    rng: &mut R,
) -> Result<ConvergenceParams, AnalysisError> {
    if probe.batch == 0 {
        return Err(AnalysisError::InvalidParam("probe batch must be positive".into()));
    }
    let (l, mu) = task.curvature_bounds();
    let w_star = task.optimum()?;
    let f_star = task.objective_value(&w_star)?;
    let f_k: Vec<f64> = (0..task.n_clients())
        .map(|k| task.client_optimum(k).and_then(|w| task.client_value(k, &w)))
        .collect::<Result<_, _>>()?;
    let gamma = gamma_het(f_star, &f_k, &task.weights)?;

    let mut var_max = vec![0.0f64; task.n_clients()];
    let mut g2_max = 0.0f64;
    for w in probe.points.iter().chain(std::iter::once(&w_star)) {
        for (k, vmax) in var_max.iter_mut().enumerate() {
            let (var, norm2) = gradient_moments(task, k, w, probe.batch, probe.draws, rng)?;
            *vmax = vmax.max(var);
            g2_max = g2_max.max(norm2 + var);
        }
    }
    let inflate = 1.0 + probe.margin;
    let sigma: Vec<f64> = var_max.iter().map(|v| v.sqrt() * inflate).collect();
    ConvergenceParams::new(l, mu, sigma, g2_max.sqrt() * inflate, e_local, task.weights.clone(), gamma)
}

/// Estimate constants over the iterates of one calibration run of
/// `config` with `seed`. The probe batch is the configured batch size.
pub fn calibrate(
    topology: &Topology,
    task: &ConvexTask,
    config: &EngineConfig,
    seed: u64,
    margin: f64,
) -> Result<ConvergenceParams, AnalysisError> {
    let mut sim = Simulation::new(topology, task, config.clone(), seed)?;
    sim.record_iterates();
    let rounds = config
        .termination
        .max_rounds
        .ok_or_else(|| AnalysisError::InvalidParam("calibration needs a round limit".into()))?;
    for _ in 0..rounds {
        sim.run_round()?;
    }
    let probe = ProbeRegion { margin, ..ProbeRegion::new(sim.take_iterates(), config.batch) };
    estimate_constants(task, config.e_steps, &probe, &mut stream_rng(seed, "calibration", Stream::Training))
}

/// Whether `config` indexes its step sizes by local step.
pub fn per_step_schedule(config: &EngineConfig) -> bool {
    config.lr_per_step && matches!(config.lr, LrSchedule::Theorem { .. })
}

/// Replica-averaged quantities at one round boundary; `t = 0` is the initial
/// model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: usize,
    /// Mean of `|w_t - w*|^2` over replicas.
    pub delta: f64,
    pub delta_se: f64,
    /// Mean of `F(w_t) - F*` over replicas.
    pub gap: f64,
    pub gap_se: f64,
    pub delta_tilde: f64,
    pub bound: f64,
    /// Mean participation ratio of the round that produced this point.
    pub r_t: f64,
    /// Local step sizes of that round.
    pub etas: Vec<f64>,
    /// Mean `C_t` of that round.
    pub c_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTrace {
    pub replicas: usize,
    /// Every replica activated every client in every round; the bound
    /// then uses `B` alone, otherwise `B + D`.
    pub full_participation: bool,
    pub delta0: f64,
    pub params: ConvergenceParams,
    pub points: Vec<TracePoint>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Reduce replica reports, in the given order, into a trace. Step sizes are
/// taken from the first replica. `per_step` marks a schedule indexed by
/// local step, in which case the bound of round `t` is evaluated at step `t E`.
pub fn build_trace(
    reports: &[SimulationReport],
    params: &ConvergenceParams,
    per_step: bool,
) -> Result<BoundTrace, AnalysisError> {
    let first = reports.first().ok_or(AnalysisError::InsufficientReplicas(0))?;
    let rounds = first.rounds.len();
    for r in reports {
        if r.rounds.len() != rounds {
            return Err(AnalysisError::ReplicaMismatch(format!("{} vs {} rounds", r.rounds.len(), rounds)));
        }
        if r.summary.initial_dist_sq.is_none() || r.summary.initial_gap.is_none() {
            return Err(AnalysisError::ReplicaMismatch("report lacks optimum tracking".into()));
        }
    }
    let delta0 = first.summary.initial_dist_sq.unwrap_or(0.0);
    let b = compute_b(params);
    // with every client in every round C_t vanishes and B alone applies
    let full_participation = reports.iter().all(|r| r.rounds.iter().all(|x| x.n_activated == params.n_clients));
    let bound_at = |t: usize| {
        if full_participation {
            theorem_bound_full(params, t, delta0)
        } else {
            theorem_bound(params, t, delta0)
        }
    };
    let mut c_seq = Vec::with_capacity(rounds);
    let mut points = Vec::with_capacity(rounds + 1);
    let column = |f: &dyn Fn(&SimulationReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let (d0, d0_se) = mean_se(&column(&|r| r.summary.initial_dist_sq.unwrap_or(f64::NAN)));
    let (g0, g0_se) = mean_se(&column(&|r| r.summary.initial_gap.unwrap_or(f64::NAN)));
    points.push(TracePoint {
        t: 0,
        delta: d0,
        delta_se: d0_se,
        gap: g0,
        gap_se: g0_se,
        delta_tilde: delta0,
        bound: bound_at(0),
        r_t: 1.0,
        etas: Vec::new(),
        c_t: 0.0,
    });
    let scale = if per_step { params.e_local } else { 1 };
    for t in 0..rounds {
        let (delta, delta_se) = mean_se(&column(&|r| r.rounds[t].dist_sq.unwrap_or(f64::NAN)));
        let (gap, gap_se) = mean_se(&column(&|r| r.rounds[t].gap.unwrap_or(f64::NAN)));
        let r_t = column(&|r| r.rounds[t].participation).iter().sum::<f64>() / reports.len() as f64;
        let c_t = column(&|r| c_or_d(params, r.rounds[t].n_activated)).iter().sum::<f64>() / reports.len() as f64;
        c_seq.push(c_t);
        points.push(TracePoint {
            t: t + 1,
            delta,
            delta_se,
            gap,
            gap_se,
            delta_tilde: 0.0,
            bound: bound_at((t + 1) * scale),
            r_t,
            etas: first.rounds[t].etas.clone(),
            c_t,
        });
    }
    for (p, d) in points.iter_mut().zip(supremum_recursion(delta0, params.mu, b, &c_seq)) {
        p.delta_tilde = d;
    }
    Ok(BoundTrace { replicas: reports.len(), delta0, full_participation, params: params.clone(), points })
}

/// Per-round check of `D_{t+1} <= (1 - eta mu) D_t + eta^2 (B + C_t)`,
/// composed over the local steps of the round, with a slack of three
/// standard errors of the replica means.
pub fn lemma1_check(trace: &BoundTrace) -> Result<Vec<bool>, AnalysisError> {
    if trace.replicas < 2 {
        return Err(AnalysisError::InsufficientReplicas(trace.replicas));
    }
    let b = compute_b(&trace.params);
    let mu = trace.params.mu;
    Ok(trace
        .points
        .windows(2)
        .map(|w| {
            let (prev, next) = (&w[0], &w[1]);
            let mut rhs = prev.delta;
            let mut contraction = 1.0;
            for eta in &next.etas {
                rhs = (1.0 - eta * mu) * rhs + eta * eta * (b + next.c_t);
                contraction *= (1.0 - eta * mu).abs();
            }
            let slack = 3.0 * (next.delta_se + contraction * prev.delta_se);
            next.delta <= rhs + slack
        })
        .collect())
}

/// Per-point check of the measured gap against the bound, with a slack of
/// three standard errors.
pub fn theorem_check(trace: &BoundTrace) -> Vec<bool> {
    trace.points.iter().map(|p| p.gap <= p.bound + 3.0 * p.gap_se).collect()
}

/// Pass/fail summary of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub replicas: usize,
    pub rounds: usize,
    pub lemma1_violations: Vec<usize>,
    pub theorem_violations: Vec<usize>,
    pub pass: bool,
}

pub fn verdict(trace: &BoundTrace) -> Result<Verdict, AnalysisError> {
    let lemma1_violations: Vec<usize> =
        lemma1_check(trace)?.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    let theorem_violations: Vec<usize> =
        theorem_check(trace).iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i).collect();
    Ok(Verdict {
        replicas: trace.replicas,
        rounds: trace.points.len().saturating_sub(1),
        pass: lemma1_violations.is_empty() && theorem_violations.is_empty(),
        lemma1_violations,
        theorem_violations,
    })
}
