use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ModelVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    None,
    /// `w + N(0, nis)`
    Additive,
    /// `w * (1 + N(0, nis))`
    Multiplicative,
}

/// Noise injected by malicious clients into their uploads. `nis` is the
/// standard deviation of the Gaussian.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub nis: f64,
    pub malicious_ids: BTreeSet<String>,
}

impl NoiseSpec {
    pub fn is_identity(&self) -> bool {
        self.mode == NoiseMode::None || self.nis == 0.0
    }

    pub fn applies_to(&self, client: &str) -> bool {
        !self.is_identity() && self.malicious_ids.contains(client)
    }
}

/// Perturb `model` per `mode`. The identity cases draw nothing from `rng`.
pub fn inject_noise<R: Rng + ?Sized>(model: &ModelVec, mode: NoiseMode, nis: f64, rng: &mut R) -> ModelVec {
    if mode == NoiseMode::None || nis == 0.0 {
        return model.clone();
    }
    let mut out = model.clone();
    for v in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(rng);
        match mode {
            NoiseMode::Additive => *v += nis * z,
            NoiseMode::Multiplicative => *v *= 1.0 + nis * z,
            NoiseMode::None => unreachable!(),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn identity_cases() {
        let w = ModelVec::new(vec![0.1, -3.0, 7.5]);
        let mut rng = SimRng::seed_from_u64(1);
        assert_eq!(inject_noise(&w, NoiseMode::None, 0.3, &mut rng), w);
        assert_eq!(inject_noise(&w, NoiseMode::Additive, 0.0, &mut rng), w);
        assert_eq!(inject_noise(&w, NoiseMode::Multiplicative, 0.0, &mut rng), w);
        // nothing was drawn
        let mut fresh = SimRng::seed_from_u64(1);
        assert_eq!(rng.random::<u64>(), fresh.random::<u64>());
    }

    #[test]
    fn additive_deviation() {
        let n = 1_000_000;
        let w = ModelVec::zeros(n);
        let mut rng = SimRng::seed_from_u64(2);
        let noisy = inject_noise(&w, NoiseMode::Additive, 0.1, &mut rng);
        let mean = noisy.as_slice().iter().sum::<f64>() / n as f64;
        let var = noisy.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.001);
    }

    #[test]
    fn additive_commutes_with_shift_in_mean() {
        let n = 200_000;
        let shift = 4.0;
        let base = ModelVec::zeros(n);
        let shifted = ModelVec::new(vec![shift; n]);
        let a = inject_noise(&base, NoiseMode::Additive, 0.5, &mut SimRng::seed_from_u64(3));
        let b = inject_noise(&shifted, NoiseMode::Additive, 0.5, &mut SimRng::seed_from_u64(4));
        let ma = a.as_slice().iter().sum::<f64>() / n as f64;
        let mb = b.as_slice().iter().sum::<f64>() / n as f64;
        // standard error of each mean is 0.5 / sqrt(n) ~ 1.1e-3
        assert!((mb - ma - shift).abs() < 0.01);
    }

    #[test]
    fn multiplicative_scales_with_magnitude() {
        let w = ModelVec::new(vec![0.0, 10.0]);
        let noisy = inject_noise(&w, NoiseMode::Multiplicative, 0.2, &mut SimRng::seed_from_u64(5));
        assert_eq!(noisy[0], 0.0);
        assert_ne!(noisy[1], 10.0);
    }

    #[test]
    fn spec_membership() {
        let spec = NoiseSpec { mode: NoiseMode::Additive, nis: 0.1, malicious_ids: ["c1".to_string()].into() };
        assert!(spec.applies_to("c1"));
        assert!(!spec.applies_to("c2"));
        let off = NoiseSpec { nis: 0.0, ..spec };
        assert!(!off.applies_to("c1"));
    }
}
