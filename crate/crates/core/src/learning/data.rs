//! Dataset partitioning, synthetic task generation and the flat columnar
//! text format used to persist generated datasets.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ClientData, ConvexTask, LearningError, Sample, TaskKind};
use crate::rng::{stream_rng, Stream};

/// Sizes proportional to `ratios` by largest-remainder rounding. Leftover
/// units go to the largest fractional parts; ties go to the lower index.
pub fn partition_sizes(n: usize, ratios: &[f64]) -> Result<Vec<usize>, LearningError> {
    if ratios.is_empty() || ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(LearningError::InvalidParam("partition ratios must be positive".into()));
    }
    let total: f64 = ratios.iter().sum();
    let quotas: Vec<f64> = ratios.iter().map(|r| n as f64 * r / total).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Shuffle `samples` and split them into disjoint shards sized by
/// [`partition_sizes`].
pub fn partition_dataset<T: Clone, R: Rng + ?Sized>(
    samples: &[T],
    ratios: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<T>>, LearningError> {
    if samples.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    if ratios.len() > samples.len() {
        return Err(LearningError::TooManyClients { clients: ratios.len(), samples: samples.len() });
    }
    let sizes = partition_sizes(samples.len(), ratios)?;
    let mut shuffled = samples.to_vec();
    shuffled.shuffle(rng);
    let mut out = Vec::with_capacity(sizes.len());
    let mut rest = shuffled.as_slice();
    for s in sizes {
        let (head, tail) = rest.split_at(s);
        out.push(head.to_vec());
        rest = tail;
    }
    Ok(out)
}

/// Parameters of a synthetic strongly convex task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: TaskKind,
    pub dim: usize,
    pub samples: usize,
    /// Partition ratios in sorted client order; uniform when absent.
    pub ratios: Option<Vec<f64>>,
    pub lambda: f64,
    pub label_noise: f64,
    /// Scale of the per-client shift of the ground-truth model (non-iid data).
    pub heterogeneity: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kind: TaskKind::RidgeQuadratic,
            dim: 5,
            samples: 400,
            ratios: None,
            lambda: 0.1,
            label_noise: 0.1,
            heterogeneity: 0.0,
        }
    }
}

/// Generate a task whose clients are `client_ids`, in that order.
pub fn generate_task(spec: &SyntheticSpec, client_ids: &[String], seed: u64) -> Result<ConvexTask, LearningError> {
    if spec.dim == 0 {
        return Err(LearningError::InvalidParam("dimension must be positive".into()));
    }
    let ratios = spec.ratios.clone().unwrap_or_else(|| vec![1.0; client_ids.len()]);
    if ratios.len() != client_ids.len() {
        return Err(LearningError::InvalidParam(format!(
            "{} partition ratios for {} clients",
            ratios.len(),
            client_ids.len()
        )));
    }
    let mut rng = stream_rng(seed, "task", Stream::Dataset);
    let normal = |rng: &mut crate::rng::SimRng| -> f64 { StandardNormal.sample(rng) };
    let w_true: Vec<f64> = (0..spec.dim).map(|_| normal(&mut rng)).collect();
    let xs: Vec<Vec<f64>> = (0..spec.samples).map(|_| (0..spec.dim).map(|_| normal(&mut rng)).collect()).collect();
    let shards = partition_dataset(&xs, &ratios, &mut stream_rng(seed, "task", Stream::Partition))?;

    let mut clients = Vec::with_capacity(client_ids.len());
    for (id, shard) in client_ids.iter().zip(shards) {
        let mut crng = stream_rng(seed, id, Stream::Dataset);
        let w_client: Vec<f64> = w_true.iter().map(|w| w + spec.heterogeneity * normal(&mut crng)).collect();
        let samples = shard
            .into_iter()
            .map(|x| {
                let z: f64 =
                    x.iter().zip(&w_client).map(|(a, b)| a * b).sum::<f64>() + spec.label_noise * normal(&mut crng);
                let y = match spec.kind {
                    TaskKind::RidgeQuadratic => z,
                    TaskKind::L2Logistic => {
                        if z >= 0.0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                Sample { x, y }
            })
            .collect();
        clients.push(ClientData { id: id.clone(), samples });
    }
    ConvexTask::new(spec.kind, spec.dim, spec.lambda, clients, None)
}

/// Serialize samples as `client,y,x0,..,x{d-1}` rows. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_dataset(task: &ConvexTask) -> String {
    let mut out = String::from("client,y");
    for i in 0..task.dim {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for c in &task.clients {
        for s in &c.samples {
            let _ = write!(out, "{},{:?}", c.id, s.y);
            for v in &s.x {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
    }
    out
}

/// Parse [`write_dataset`] output back into per-client samples, preserving the
/// order in which clients first appear.
pub fn read_dataset(text: &str) -> Result<(usize, Vec<ClientData>), LearningError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| LearningError::Parse("empty dataset file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "client" || cols[1] != "y" {
        return Err(LearningError::Parse(format!("unexpected header `{header}`")));
    }
    let dim = cols.len() - 2;
    let mut clients: Vec<ClientData> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(LearningError::Parse(format!("line {}: expected {} fields", lineno + 2, dim + 2)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| LearningError::Parse(format!("line {}: {e}", lineno + 2)));
        let y = num(fields[1])?;
        let x = fields[2..].iter().map(|s| num(s)).collect::<Result<Vec<_>, _>>()?;
        let id = fields[0];
        match clients.iter_mut().find(|c| c.id == id) {
            Some(c) => c.samples.push(Sample { x, y }),
            None => clients.push(ClientData { id: id.to_string(), samples: vec![Sample { x, y }] }),
        }
    }
    Ok((dim, clients))
}
