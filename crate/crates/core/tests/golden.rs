//! Committed golden outputs. Set `UPDATE_GOLDEN=1` to rewrite them after an
//! intentional change.

mod common;

use flsim::engine::{run_simulation, EngineConfig, SimulationReport, TerminationSpec};
use flsim::exec::{plan_partition, run_parallel, WorkerPlan};
use flsim::learning::{generate_task, ConvexTask, SyntheticSpec};
use flsim::topology::Topology;

use common::fixture_path;

fn check_golden(name: &str, actual: &str) {
    let path = fixture_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the committed golden output");
}

fn experiment() -> (Topology, ConvexTask) {
    let topo = Topology::parse(&std::fs::read_to_string(fixture_path("experiment_11.json")).unwrap()).unwrap();
    let task =
        generate_task(&SyntheticSpec { heterogeneity: 0.5, ..Default::default() }, &topo.client_ids(), 7).unwrap();
    (topo, task)
}

fn seed7_config() -> EngineConfig {
    EngineConfig { e_steps: 2, batch: 4, termination: TerminationSpec::rounds(200), ..Default::default() }
}

#[test]
fn worker_plan_for_two_workers() {
    let (topo, _) = experiment();
    let plan = plan_partition(&topo, 2).unwrap();
    check_golden("worker_plan_2.json", &(serde_json::to_string_pretty(&plan).unwrap() + "\n"));
    let back: WorkerPlan =
        serde_json::from_str(&std::fs::read_to_string(fixture_path("worker_plan_2.json")).unwrap()).unwrap();
    assert_eq!(back, plan);
}

#[test]
fn seed7_report() {
    let (topo, task) = experiment();
    let report = run_simulation(&topo, &task, &seed7_config(), 7).unwrap();
    assert_eq!(report.rounds.len(), 200);
    assert_eq!(report.summary.terminated_by, "max_rounds");
    let text = report.to_jsonl();
    check_golden("seed7_report.jsonl", &text);
    assert_eq!(SimulationReport::from_jsonl(&text).unwrap(), report);
}

#[test]
fn seed7_report_is_worker_invariant() {
    let (topo, task) = experiment();
    let serial = run_simulation(&topo, &task, &seed7_config(), 7).unwrap();
    for n in [2, 4] {
        let plan = plan_partition(&topo, n).unwrap();
        assert_eq!(run_parallel(&plan, &topo, &task, &seed7_config(), 7).unwrap(), serial, "{n} workers");
    }
}
