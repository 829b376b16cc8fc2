use serde::{Deserialize, Serialize};

use super::LearningError;

/// Dense model parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelVec(Vec<f64>);

impl ModelVec {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Error unless every coordinate is finite.
    pub fn check_finite(&self) -> Result<(), LearningError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(LearningError::NonFinite)
        }
    }

    pub fn check_dim(&self, expected: usize) -> Result<(), LearningError> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(LearningError::DimensionMismatch { expected, got: self.dim() })
        }
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &ModelVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &[f64]) {
        for (s, v) in self.0.iter_mut().zip(x) {
            *s += alpha * v;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for s in &mut self.0 {
            *s *= alpha;
        }
    }

    /// `sum_i w_i * m_i`, accumulated in the given order from zero.
    pub fn weighted_sum<'a, I>(dim: usize, items: I) -> Result<ModelVec, LearningError>
    where
        I: IntoIterator<Item = (f64, &'a ModelVec)>,
    {
        let mut acc = ModelVec::zeros(dim);
        for (w, m) in items {
            m.check_dim(dim)?;
            acc.axpy(w, &m.0);
        }
        Ok(acc)
    }
}

impl From<Vec<f64>> for ModelVec {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl std::ops::Index<usize> for ModelVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
