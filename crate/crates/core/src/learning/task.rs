//! Strongly convex objectives: l2-regularized least squares and l2-regularized
//! logistic regression, split across clients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LearningError, ModelVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// `l(w; x, y) = (x.w - y)^2 / 2`
    RidgeQuadratic,
    /// `l(w; x, y) = ln(1 + exp(-y x.w))` with labels in {-1, +1}
    L2Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub id: String,
    pub samples: Vec<Sample>,
}

/// Global objective `F(w) = sum_n p_n F_n(w)` with
/// `F_n(w) = mean_j l(w; x_nj, y_nj) + lambda/2 |w|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexTask {
    pub kind: TaskKind,
    pub dim: usize,
    pub lambda: f64,
    pub clients: Vec<ClientData>,
    pub weights: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl ConvexTask {
    /// Build a task. Without explicit weights, `p_n` is proportional to the
    /// client's sample count.
    pub fn new(
        kind: TaskKind,
        dim: usize,
        lambda: f64,
        clients: Vec<ClientData>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self, LearningError> {
        if dim == 0 {
            return Err(LearningError::InvalidParam("dimension must be positive".into()));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(LearningError::InvalidParam(format!("lambda must be nonnegative, got {lambda}")));
        }
        if clients.is_empty() {
            return Err(LearningError::InvalidParam("task needs at least one client".into()));
        }
        for c in &clients {
            for s in &c.samples {
                if s.x.len() != dim {
                    return Err(LearningError::DimensionMismatch { expected: dim, got: s.x.len() });
                }
                if kind == TaskKind::L2Logistic && s.y != 1.0 && s.y != -1.0 {
                    return Err(LearningError::InvalidParam(format!("logistic labels must be +-1, got {}", s.y)));
                }
            }
        }
        let weights = match weights {
            Some(w) => w,
            None => {
                let total: usize = clients.iter().map(|c| c.samples.len()).sum();
                if total == 0 {
                    vec![1.0 / clients.len() as f64; clients.len()]
                } else {
                    clients.iter().map(|c| c.samples.len() as f64 / total as f64).collect()
                }
            }
        };
        if weights.len() != clients.len() {
            return Err(LearningError::InvalidWeights(format!(
                "{} weights for {} clients",
                weights.len(),
                clients.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LearningError::InvalidWeights("weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(LearningError::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { kind, dim, lambda, clients, weights })
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn client_index(&self, id: &str) -> Option<usize> {
        self.clients.iter().position(|c| c.id == id)
    }

    pub fn total_samples(&self) -> usize {
        self.clients.iter().map(|c| c.samples.len()).sum()
    }

    fn sample_loss(&self, w: &ModelVec, s: &Sample) -> f64 {
        let z = w.dot(&s.x);
        match self.kind {
            TaskKind::RidgeQuadratic => 0.5 * (z - s.y) * (z - s.y),
            TaskKind::L2Logistic => softplus(-s.y * z),
        }
    }

    /// Adds `scale * grad l(w; s)` into `out`.
    fn add_sample_grad(&self, w: &ModelVec, s: &Sample, scale: f64, out: &mut ModelVec) {
        let z = w.dot(&s.x);
        let coeff = match self.kind {
            TaskKind::RidgeQuadratic => z - s.y,
            TaskKind::L2Logistic => -s.y * sigmoid(-s.y * z),
        };
        out.axpy(scale * coeff, &s.x);
    }

    /// Gradient of a single sample including the regularizer.
    pub fn sample_grad(&self, client: usize, j: usize, w: &ModelVec) -> ModelVec {
        let mut g = w.clone();
        g.scale(self.lambda);
        self.add_sample_grad(w, &self.clients[client].samples[j], 1.0, &mut g);
        g
    }

    pub fn client_value(&self, client: usize, w: &ModelVec) -> Result<f64, LearningError> {
        w.check_dim(self.dim)?;
        let samples = &self.clients[client].samples;
        let data = if samples.is_empty() {
            0.0
        } else {
            samples.iter().map(|s| self.sample_loss(w, s)).sum::<f64>() / samples.len() as f64
        };
        Ok(data + 0.5 * self.lambda * w.norm_sq())
    }

    pub fn client_grad(&self, client: usize, w: &ModelVec) -> Result<ModelVec, LearningError> {
        w.check_dim(self.dim)?;
        let samples = &self.clients[client].samples;
        let mut g = w.clone();
        g.scale(self.lambda);
        if !samples.is_empty() {
            let scale = 1.0 / samples.len() as f64;
            for s in samples {
                self.add_sample_grad(w, s, scale, &mut g);
            }
        }
        Ok(g)
    }

    /// Mini-batch gradient over the given sample indices.
    pub fn batch_grad(&self, client: usize, w: &ModelVec, batch: &[usize]) -> ModelVec {
        let samples = &self.clients[client].samples;
        let mut g = w.clone();
        g.scale(self.lambda);
        let scale = 1.0 / batch.len() as f64;
        for &j in batch {
            self.add_sample_grad(w, &samples[j], scale, &mut g);
        }
        g
    }

    /// `F(w)`
    pub fn objective_value(&self, w: &ModelVec) -> Result<f64, LearningError> {
        let mut total = 0.0;
        for (k, p) in self.weights.iter().enumerate() {
            if *p != 0.0 {
                total += p * self.client_value(k, w)?;
            }
        }
        Ok(total)
    }

    /// `grad F(w)`
    pub fn objective_grad(&self, w: &ModelVec) -> Result<ModelVec, LearningError> {
        w.check_dim(self.dim)?;
        let mut g = ModelVec::zeros(self.dim);
        for (k, p) in self.weights.iter().enumerate() {
            if *p != 0.0 {
                g.axpy(*p, self.client_grad(k, w)?.as_slice());
            }
        }
        Ok(g)
    }

    /// Hessian of `F_n` at `w` (constant for the ridge task).
    pub fn client_hessian(&self, client: usize, w: &ModelVec) -> DMatrix<f64> {
        let d = self.dim;
        let mut h = DMatrix::<f64>::identity(d, d) * self.lambda;
        let samples = &self.clients[client].samples;
        if samples.is_empty() {
            return h;
        }
        let scale = 1.0 / samples.len() as f64;
        for s in samples {
            let curv = match self.kind {
                TaskKind::RidgeQuadratic => 1.0,
                TaskKind::L2Logistic => {
                    let p = sigmoid(w.dot(&s.x));
                    p * (1.0 - p)
                }
            };
            let x = DVector::from_column_slice(&s.x);
            h += &x * x.transpose() * (scale * curv);
        }
        h
    }

    pub fn hessian(&self, w: &ModelVec) -> DMatrix<f64> {
        let mut h = DMatrix::<f64>::zeros(self.dim, self.dim);
        for (k, p) in self.weights.iter().enumerate() {
            if *p != 0.0 {
                h += self.client_hessian(k, w) * *p;
            }
        }
        h
    }

    /// Smoothness and strong-convexity constants `(L, mu)` shared by every
    /// `F_n`. Exact eigen-extremes for ridge; for logistic the curvature is
    /// bounded by `lambda_max(X^T X) / (4 s_n) + lambda` above and `lambda` below.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        let mut l = f64::MIN;
        let mut mu = f64::MAX;
        let origin = ModelVec::zeros(self.dim);
        for k in 0..self.n_clients() {
            let h = self.client_hessian(k, &origin);
            let eig = h.symmetric_eigen().eigenvalues;
            let hi = eig.max();
            let lo = eig.min();
            match self.kind {
                TaskKind::RidgeQuadratic => {
                    l = l.max(hi);
                    mu = mu.min(lo);
                }
                TaskKind::L2Logistic => {
                    // at w = 0 every curvature weight is 1/4
                    l = l.max(hi);
                    mu = mu.min(self.lambda);
                }
            }
        }
        (l, mu)
    }

    /// Minimizer of `F`.
    pub fn optimum(&self) -> Result<ModelVec, LearningError> {
        self.minimize(|w| self.objective_grad(w), |w| self.hessian(w))
    }

    /// Minimizer of `F_n`.
    pub fn client_optimum(&self, client: usize) -> Result<ModelVec, LearningError> {
        self.minimize(|w| self.client_grad(client, w), |w| self.client_hessian(client, w))
    }

    /// Newton's method; a single step is exact for the ridge task.
    fn minimize<G, H>(&self, grad: G, hess: H) -> Result<ModelVec, LearningError>
    where
        G: Fn(&ModelVec) -> Result<ModelVec, LearningError>,
        H: Fn(&ModelVec) -> DMatrix<f64>,
    {
        let mut w = ModelVec::zeros(self.dim);
        let max_iter = match self.kind {
            TaskKind::RidgeQuadratic => 2,
            TaskKind::L2Logistic => 100,
        };
        for _ in 0..max_iter {
            let g = grad(&w)?;
            let h = hess(&w);
            let step = h
                .cholesky()
                .ok_or_else(|| LearningError::InvalidParam("objective is not strongly convex".into()))?
                .solve(&DVector::from_column_slice(g.as_slice()));
            w.axpy(-1.0, step.as_slice());
            if step.norm() <= 1e-15 * (1.0 + w.norm()) {
                break;
            }
        }
        w.check_finite()?;
        Ok(w)
    }
}
