use serde::{Deserialize, Serialize};

use super::ChannelError;

/// Distribution of the number of responses that land inside the time window.
/// `probs[k]` is the probability of exactly `k` responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePmf {
    pub probs: Vec<f64>,
}

impl ResponsePmf {
    pub fn n_clients(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Total-variation distance to another PMF over the same support.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        let n = self.probs.len().max(other.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        0.5 * (0..n).map(|i| (get(&self.probs, i) - get(other, i)).abs()).sum::<f64>()
    }
}

/// Exact PMF of the success count of independent, non-identical Bernoulli
/// trials (Poisson-binomial), by the O(N^2) convolution.
pub fn response_pmf_heterogeneous(success_probs: &[f64]) -> Result<ResponsePmf, ChannelError> {
    for (index, &value) in success_probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(ChannelError::ProbabilityOutOfRange { index, value });
        }
    }
    let mut probs = Vec::with_capacity(success_probs.len() + 1);
    probs.push(1.0);
    for &p in success_probs {
        let q = 1.0 - p;
        probs.push(0.0);
        for k in (0..probs.len()).rev() {
            let stay = probs[k] * q;
            let step = if k > 0 { probs[k - 1] * p } else { 0.0 };
            probs[k] = stay + step;
        }
    }
    Ok(ResponsePmf { probs })
}

/// Binomial PMF `C(n, k) r^k (1 - r)^(n - k)`.
pub fn response_pmf_homogeneous(n: usize, r: f64) -> ResponsePmf {
    let r = r.clamp(0.0, 1.0);
    let q = 1.0 - r;
    let mut probs = Vec::with_capacity(n + 1);
    // C(n, k) built incrementally; exact in f64 for the sizes simulated here.
    let mut coeff = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            coeff = coeff * (n - k + 1) as f64 / k as f64;
        }
        probs.push(coeff * r.powi(k as i32) * q.powi((n - k) as i32));
    }
    ResponsePmf { probs }
}

/// Law-of-large-numbers estimate of the response count, `n * r`.
pub fn expected_responses(n: usize, r: f64) -> f64 {
    n as f64 * r
}
