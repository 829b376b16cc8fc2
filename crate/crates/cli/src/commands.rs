use std::fs;
use std::path::{Path, PathBuf};

use flsim::analysis::{build_trace, calibrate, per_step_schedule, verdict, Verdict};
use flsim::engine::{run_simulation, EngineConfig, SimulationReport};
use flsim::exec::{plan_partition, run_parallel, run_replicas};
use flsim::learning::{write_dataset, ConvexTask};
use flsim::rng::replica_seed;
use flsim::topology::{Role, Topology};
use serde::Serialize;

use crate::config::{read_text, Resolved};
use crate::error::CliError;
use crate::sweep::{self, SweepSpec};

const REPLICA_DIR: &str = "replicas";

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::write(path, e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn simulate(
    topo: &Topology,
    task: &ConvexTask,
    engine: &EngineConfig,
    seed: u64,
    workers: usize,
) -> Result<SimulationReport, CliError> {
    if workers > 1 {
        let plan = plan_partition(topo, workers)?;
        Ok(run_parallel(&plan, topo, task, engine, seed)?)
    } else {
        Ok(run_simulation(topo, task, engine, seed)?)
    }
}

fn replica_path(out: &Path, i: usize) -> PathBuf {
    out.join(REPLICA_DIR).join(format!("replica_{i:03}.jsonl"))
}

pub fn run(res: &Resolved) -> Result<(), CliError> {
    let topo = res.topology()?;
    let task = res.build_task(&topo, &res.task)?;
    write(&res.out.join("dataset.csv"), &write_dataset(&task))?;
    if res.replicas == 1 {
        let report = simulate(&topo, &task, &res.engine, res.seed, res.workers)?;
        write(&res.out.join("rounds.jsonl"), &report.to_jsonl())?;
        write(&res.out.join("summary.json"), &pretty(&report.summary))?;
        let s = &report.summary;
        println!(
            "{} rounds, terminated by {}; loss {:.6e} -> {:.6e}; energy {:.6e} J; time {:.6} s",
            s.rounds, s.terminated_by, s.initial_loss, s.final_loss, s.total_energy_j, s.total_time_s
        );
        return Ok(());
    }
    let reports = run_replicas(&topo, &task, &res.engine, res.seed, res.replicas, res.workers)?;
    for (i, r) in reports.iter().enumerate() {
        write(&replica_path(&res.out, i), &r.to_jsonl())?;
    }
    let summaries: Vec<_> = reports.iter().map(|r| &r.summary).collect();
    write(&res.out.join("summary.json"), &pretty(&summaries))?;
    let mean_loss = summaries.iter().map(|s| s.final_loss).sum::<f64>() / summaries.len() as f64;
    println!("{} replicas; mean final loss {mean_loss:.6e}", reports.len());
    if res.analysis.enabled {
        check_bounds(res, &topo, &task, &reports, &res.out)?;
    }
    Ok(())
}

/// Replica reports of a replicated run, in replica order.
fn load_replicas(report_dir: &Path) -> Result<Vec<SimulationReport>, CliError> {
    let dir = report_dir.join(REPLICA_DIR);
    if !dir.is_dir() {
        if report_dir.join("rounds.jsonl").is_file() {
            return Err(CliError::config(format!(
                "{} holds a single-replica report; the analysis needs a replicated run",
                report_dir.display()
            )));
        }
        return Err(CliError::config(format!("no replica reports under {}", report_dir.display())));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CliError::read(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            SimulationReport::from_jsonl(&read_text(p)?).map_err(|e| CliError::config(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn check_bounds(
    res: &Resolved,
    topo: &Topology,
    task: &ConvexTask,
    reports: &[SimulationReport],
    out: &Path,
) -> Result<Verdict, CliError> {
    if reports.len() < 2 {
        return Err(CliError::config(format!("the analysis needs at least two replicas, found {}", reports.len())));
    }
    for (i, r) in reports.iter().enumerate() {
        let expected = replica_seed(res.seed, i);
        if r.summary.seed != expected {
            return Err(CliError::config(format!(
                "replica {i} was run with seed {} but the config implies {expected}",
                r.summary.seed
            )));
        }
    }
    let params = calibrate(topo, task, &res.engine, res.seed, res.analysis.margin)?;
    let trace = build_trace(reports, &params, per_step_schedule(&res.engine))?;
    let v = verdict(&trace)?;
    write(&out.join("trace.json"), &pretty(&trace))?;
    write(&out.join("verdict.json"), &pretty(&v))?;
    println!(
        "verdict over {} replicas, {} rounds: one-step inequality violated at {} rounds, gap bound at {} points: {}",
        v.replicas,
        v.rounds,
        v.lemma1_violations.len(),
        v.theorem_violations.len(),
        if v.pass { "PASS" } else { "FAIL" }
    );
    if v.pass {
        Ok(v)
    } else {
        Err(CliError::Verdict(format!(
            "bound checks failed (one-step rounds {:?}, gap points {:?})",
            v.lemma1_violations, v.theorem_violations
        )))
    }
}

pub fn analyze(res: &Resolved, report_dir: &Path, out: Option<&Path>, expected: Option<usize>) -> Result<(), CliError> {
    let reports = load_replicas(report_dir)?;
    if let Some(n) = expected {
        if n != reports.len() {
            return Err(CliError::config(format!(
                "replica-count mismatch: expected {n}, found {} under {}",
                reports.len(),
                report_dir.display()
            )));
        }
    }
    let topo = res.topology()?;
    let task = res.build_task(&topo, &res.task)?;
    check_bounds(res, &topo, &task, &reports, out.unwrap_or(report_dir)).map(|_| ())
}

#[derive(Serialize)]
struct PointSummary<'a> {
    point: usize,
    params: &'a sweep::Point,
    terminated_by: &'a str,
    rounds: usize,
    final_loss: f64,
    total_energy_j: f64,
    total_time_s: f64,
}

pub fn sweep(res: &Resolved, spec: &SweepSpec) -> Result<(), CliError> {
    let points = sweep::expand(spec)?;
    if res.dataset_path.is_some() && points.iter().any(|p| p.ratios.is_some()) {
        return Err(CliError::config("sweep `ratios` needs a synthetic task, not a dataset file"));
    }
    let base_topo = res.topology()?;
    let mut table = Vec::new();
    let mut index = String::new();
    for (i, point) in points.iter().enumerate() {
        let topo = point.topology(&base_topo)?;
        let engine = point.engine(&res.engine)?;
        let task = res.build_task(&topo, &point.task_spec(&res.task))?;
        let report = simulate(&topo, &task, &engine, res.seed, res.workers)?;
        let dir = res.out.join("points").join(format!("point_{i:03}"));
        write(&dir.join("rounds.jsonl"), &report.to_jsonl())?;
        write(&dir.join("point.json"), &pretty(point))?;
        let s = &report.summary;
        let line = PointSummary {
            point: i,
            params: point,
            terminated_by: &s.terminated_by,
            rounds: s.rounds,
            final_loss: s.final_loss,
            total_energy_j: s.total_energy_j,
            total_time_s: s.total_time_s,
        };
        index.push_str(&serde_json::to_string(&line).expect("serializable"));
        index.push('\n');
        if let Some(th) = &spec.thresholds {
            table.extend(sweep::rows(i, point, &report, th)?);
        }
    }
    write(&res.out.join("points.jsonl"), &index)?;
    if spec.thresholds.is_some() {
        write(&res.out.join("table.csv"), &sweep::to_csv(&table)?)?;
        write(&res.out.join("ladder.csv"), &sweep::to_csv(&sweep::ladder(&table))?)?;
    }
    println!("{} grid points written to {}", points.len(), res.out.display());
    Ok(())
}

pub fn validate_topology(path: &Path) -> Result<(), CliError> {
    let topo = Topology::parse(&read_text(path)?)?;
    let count = |role: Role| topo.agents().filter(|a| a.role == role).count();
    println!("{}: valid", path.display());
    println!(
        "  agents: {} (server `{}`, {} access points, {} clients)",
        topo.len(),
        topo.server_id(),
        count(Role::Ap),
        count(Role::Client)
    );
    println!("  edges: {}", topo.edge_count());
    for (cell, members) in topo.cells() {
        println!("  {cell}: {}", members.join(", "));
    }
    Ok(())
}
