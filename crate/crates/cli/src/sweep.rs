//! Parameter sweeps: a cross product over named parameters, one report per
//! grid point, and energy/time-to-threshold tables.

use std::collections::BTreeMap;

use flsim::engine::{Comparator, EngineConfig, Metric, SimulationReport};
use flsim::learning::SyntheticSpec;
use flsim::topology::{EdgeAttrs, Topology};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Parameters a sweep may vary, in the order the grid is expanded.
pub const PARAMETERS: [&str; 5] = ["per", "e_steps", "batch", "time_window_s", "ratios"];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Parameter name to the values it takes.
    pub grid: BTreeMap<String, Vec<Value>>,
    pub thresholds: Option<Thresholds>,
}

/// Either an explicit list or an inclusive `start..=stop` range.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub metric: Metric,
    pub comparator: Comparator,
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
}

impl Thresholds {
    pub fn list(&self) -> Result<Vec<f64>, CliError> {
        match (&self.values, self.start, self.stop, self.step) {
            (Some(v), None, None, None) => Ok(v.clone()),
            (None, Some(start), Some(stop), Some(step)) if step > 0.0 && stop >= start => {
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|i| start + i as f64 * step).collect())
            }
            _ => Err(CliError::config(
                "thresholds need either `values` or a `start`, `stop`, `step` range with step > 0",
            )),
        }
    }
}

/// One grid point; absent fields keep the base configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Point {
    pub per: Option<f64>,
    pub e_steps: Option<usize>,
    pub batch: Option<usize>,
    pub time_window_s: Option<f64>,
    pub ratios: Option<Vec<f64>>,
}

fn parse_values<T: for<'de> Deserialize<'de>>(name: &str, values: &[Value]) -> Result<Vec<T>, CliError> {
    values
        .iter()
        .map(|v| {
            serde_json::from_value(v.clone()).map_err(|e| CliError::config(format!("sweep `{name}` value {v}: {e}")))
        })
        .collect()
}

fn axis<T: for<'de> Deserialize<'de>>(
    name: &str,
    grid: &BTreeMap<String, Vec<Value>>,
) -> Result<Vec<Option<T>>, CliError> {
    match grid.get(name) {
        None => Ok(vec![None]),
        Some(v) if v.is_empty() => Err(CliError::config(format!("sweep `{name}` has no values"))),
        Some(v) => Ok(parse_values::<T>(name, v)?.into_iter().map(Some).collect()),
    }
}

/// Expand the grid. An empty grid yields the single baseline point.
pub fn expand(spec: &SweepSpec) -> Result<Vec<Point>, CliError> {
    if let Some(bad) = spec.grid.keys().find(|k| !PARAMETERS.contains(&k.as_str())) {
        return Err(CliError::config(format!(
            "unknown sweep parameter `{bad}` (expected one of {})",
            PARAMETERS.join(", ")
        )));
    }
    let pers = axis::<f64>("per", &spec.grid)?;
    let es = axis::<usize>("e_steps", &spec.grid)?;
    let batches = axis::<usize>("batch", &spec.grid)?;
    let windows = axis::<f64>("time_window_s", &spec.grid)?;
    let ratios = axis::<Vec<f64>>("ratios", &spec.grid)?;
    let mut points = Vec::new();
    for per in &pers {
        for e in &es {
            for b in &batches {
                for w in &windows {
                    for r in &ratios {
                        points.push(Point { per: *per, e_steps: *e, batch: *b, time_window_s: *w, ratios: r.clone() });
                    }
                }
            }
        }
    }
    Ok(points)
}

impl Point {
    pub fn engine(&self, base: &EngineConfig) -> Result<EngineConfig, CliError> {
        let mut cfg = base.clone();
        if let Some(e) = self.e_steps {
            cfg.e_steps = e;
        }
        if let Some(b) = self.batch {
            cfg.batch = b;
        }
        if let Some(w) = self.time_window_s {
            cfg.time_window_s = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `base` with the packet error rate of every wireless edge replaced.
    pub fn topology(&self, base: &Topology) -> Result<Topology, CliError> {
        let Some(per) = self.per else {
            return Ok(base.clone());
        };
        let mut agents: Vec<_> = base.agents().cloned().collect();
        for agent in &mut agents {
            for attrs in agent.adj.values_mut() {
                if let EdgeAttrs::Wireless(ch) = attrs {
                    ch.per = per;
                    ch.validate().map_err(|e| CliError::config(format!("sweep `per` = {per}: {e}")))?;
                }
            }
        }
        Ok(Topology::from_agents(agents)?)
    }

    pub fn task_spec(&self, base: &SyntheticSpec) -> SyntheticSpec {
        let mut spec = base.clone();
        if let Some(r) = &self.ratios {
            spec.ratios = Some(r.clone());
        }
        spec
    }
}

/// Cumulative cost at the first evaluation that meets the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    /// 0 when the initial model already meets it.
    pub round: usize,
    pub energy_j: f64,
    pub time_s: f64,
}

fn metric_of(metric: Metric, loss: f64, gap: Option<f64>, dist: Option<f64>) -> Option<f64> {
    match metric {
        Metric::Loss => Some(loss),
        Metric::Gap => gap,
        Metric::DistSq => dist,
    }
}

pub fn first_crossing(report: &SimulationReport, metric: Metric, cmp: Comparator, threshold: f64) -> Option<Crossing> {
    let s = &report.summary;
    if metric_of(metric, s.initial_loss, s.initial_gap, s.initial_dist_sq).is_some_and(|v| cmp.holds(v, threshold)) {
        return Some(Crossing { round: 0, energy_j: 0.0, time_s: 0.0 });
    }
    report
        .rounds
        .iter()
        .find(|r| metric_of(metric, r.loss, r.gap, r.dist_sq).is_some_and(|v| cmp.holds(v, threshold)))
        .map(|r| Crossing { round: r.round, energy_j: r.energy_j, time_s: r.clock_s })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub point: usize,
    pub per: Option<f64>,
    pub e_steps: Option<usize>,
    pub batch: Option<usize>,
    pub time_window_s: Option<f64>,
    /// Colon-separated partition ratios.
    pub ratios: Option<String>,
    pub threshold: f64,
    pub round: Option<usize>,
    pub energy_j: Option<f64>,
    pub time_s: Option<f64>,
}

pub fn rows(
    point_index: usize,
    point: &Point,
    report: &SimulationReport,
    th: &Thresholds,
) -> Result<Vec<Row>, CliError> {
    Ok(th
        .list()?
        .into_iter()
        .map(|threshold| {
            let hit = first_crossing(report, th.metric, th.comparator, threshold);
            Row {
                point: point_index,
                per: point.per,
                e_steps: point.e_steps,
                batch: point.batch,
                time_window_s: point.time_window_s,
                ratios: point.ratios.as_ref().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":")),
                threshold,
                round: hit.map(|c| c.round),
                energy_j: hit.map(|c| c.energy_j),
                time_s: hit.map(|c| c.time_s),
            }
        })
        .collect())
}

/// Keep only the first of consecutive rows of a grid point whose energy is
/// unchanged.
pub fn ladder(rows: &[Row]) -> Vec<Row> {
    let mut out: Vec<Row> = Vec::new();
    for row in rows {
        if let Some(prev) = out.last() {
            if prev.point == row.point && prev.energy_j == row.energy_j {
                continue;
            }
        }
        out.push(row.clone());
    }
    out
}

pub fn to_csv(rows: &[Row]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "point",
            "per",
            "e_steps",
            "batch",
            "time_window_s",
            "ratios",
            "threshold",
            "round",
            "energy_j",
            "time_s",
        ])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}
