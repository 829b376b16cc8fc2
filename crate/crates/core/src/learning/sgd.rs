use rand::Rng;

use super::{ConvexTask, LearningError, ModelVec};

/// `E` local SGD steps `w <- w - eta * grad F_n(w, xi)` on client `client`,
/// each with a mini-batch of `batch` indices drawn uniformly with replacement.
pub fn local_sgd<R: Rng + ?Sized>(
    task: &ConvexTask,
    client: usize,
    model: &ModelVec,
    e_steps: usize,
    eta: f64,
    batch: usize,
    rng: &mut R,
) -> Result<ModelVec, LearningError> {
    local_sgd_traced(task, client, model, e_steps, eta, batch, rng, &mut |_| {})
}

/// [`local_sgd`] that reports every iterate (after each step) to `visit`.
#[allow(clippy::too_many_arguments)]
pub fn local_sgd_traced<R: Rng + ?Sized>(
    task: &ConvexTask,
    client: usize,
    model: &ModelVec,
    e_steps: usize,
    eta: f64,
    batch: usize,
    rng: &mut R,
    visit: &mut dyn FnMut(&ModelVec),
) -> Result<ModelVec, LearningError> {
    model.check_dim(task.dim)?;
    let n_samples = task.clients[client].samples.len();
    if e_steps == 0 {
        return Ok(model.clone());
    }
    if batch == 0 || batch > n_samples {
        return Err(LearningError::InvalidBatch { batch, samples: n_samples });
    }
    let mut w = model.clone();
    let mut idx = vec![0usize; batch];
    for _ in 0..e_steps {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n_samples);
        }
        let g = task.batch_grad(client, &w, &idx);
        if !g.is_finite() {
            return Err(LearningError::NonFinite);
        }
        w.axpy(-eta, g.as_slice());
        w.check_finite()?;
        visit(&w);
    }
    Ok(w)
}

/// Full-participation aggregation `sum_n p_n w_n`.
pub fn aggregate_full(models: &[ModelVec], p: &[f64]) -> Result<ModelVec, LearningError> {
    if models.len() != p.len() {
        return Err(LearningError::InvalidWeights(format!("{} weights for {} models", p.len(), models.len())));
    }
    let dim = models.first().map_or(0, ModelVec::dim);
    ModelVec::weighted_sum(dim, p.iter().copied().zip(models))
}

/// Partial-participation aggregation `(N / K) sum_{n in S} p_n w_n` over the
/// `K` responders given as `(p_n, w_n)`.
pub fn aggregate_partial(responders: &[(f64, &ModelVec)], n_total: usize) -> Result<ModelVec, LearningError> {
    let k = responders.len();
    if k == 0 {
        return Err(LearningError::EmptySet);
    }
    if k > n_total {
        return Err(LearningError::InvalidParam(format!("{k} responders out of {n_total} clients")));
    }
    let dim = responders[0].1.dim();
    let mut sum = ModelVec::weighted_sum(dim, responders.iter().copied())?;
    sum.scale(n_total as f64 / k as f64);
    Ok(sum)
}

/// `eta_t = 2 r_t / (mu (gamma + t))`
pub fn lr_schedule(t: usize, r_t: f64, mu: f64, gamma: f64) -> Result<f64, LearningError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(LearningError::InvalidParam(format!("mu must be positive, got {mu}")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(LearningError::InvalidParam(format!("gamma must be positive, got {gamma}")));
    }
    if !(r_t > 0.0 && r_t <= 1.0) {
        return Err(LearningError::InvalidParam(format!("participation ratio must lie in (0, 1], got {r_t}")));
    }
    Ok(2.0 * r_t / (mu * (gamma + t as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{ClientData, Sample, TaskKind};
    use crate::rng::SimRng;
    use rand::SeedableRng;

    fn half_norm_task() -> ConvexTask {
        // F(w) = |w|^2 / 2 regardless of which sample is drawn
        let c = ClientData { id: "c".into(), samples: vec![Sample { x: vec![1.0], y: 0.0 }] };
        ConvexTask::new(TaskKind::RidgeQuadratic, 1, 0.0, vec![c], None).unwrap()
    }

    #[test]
    fn single_full_step() {
        let t = half_norm_task();
        let mut rng = SimRng::seed_from_u64(0);
        let w = local_sgd(&t, 0, &ModelVec::new(vec![2.0]), 1, 1.0, 1, &mut rng).unwrap();
        assert_eq!(w, ModelVec::new(vec![0.0]));
    }

    #[test]
    fn two_half_steps() {
        let t = half_norm_task();
        let mut rng = SimRng::seed_from_u64(0);
        let mut seen = Vec::new();
        let w =
            local_sgd_traced(&t, 0, &ModelVec::new(vec![2.0]), 2, 0.5, 1, &mut rng, &mut |w| seen.push(w[0])).unwrap();
        assert_eq!(w, ModelVec::new(vec![0.5]));
        assert_eq!(seen, vec![1.0, 0.5]);
    }

    #[test]
    fn zero_steps_is_identity() {
        let t = half_norm_task();
        let mut rng = SimRng::seed_from_u64(0);
        let w0 = ModelVec::new(vec![1.25]);
        assert_eq!(local_sgd(&t, 0, &w0, 0, 1.0, 1, &mut rng).unwrap(), w0);
    }

    #[test]
    fn oversized_batch_rejected() {
        let t = half_norm_task();
        let mut rng = SimRng::seed_from_u64(0);
        let err = local_sgd(&t, 0, &ModelVec::new(vec![1.0]), 1, 1.0, 2, &mut rng).unwrap_err();
        assert_eq!(err, LearningError::InvalidBatch { batch: 2, samples: 1 });
    }

    #[test]
    fn divergence_reported() {
        let t = half_norm_task();
        let mut rng = SimRng::seed_from_u64(0);
        let err = local_sgd(&t, 0, &ModelVec::new(vec![1.0]), 2000, 1e3, 1, &mut rng).unwrap_err();
        assert_eq!(err, LearningError::NonFinite);
    }

    #[test]
    fn full_aggregation_examples() {
        let a = ModelVec::new(vec![1.0, -2.0]);
        let b = ModelVec::new(vec![5.0, 7.0]);
        let same = aggregate_full(&[a.clone(), a.clone(), a.clone(), a.clone()], &[0.25; 4]).unwrap();
        assert_eq!(same, a);
        assert_eq!(aggregate_full(&[a.clone(), b.clone()], &[1.0, 0.0]).unwrap(), a);
        let ms: Vec<_> = (1..=4).map(|i| ModelVec::new(vec![i as f64, 0.0])).collect();
        assert_eq!(aggregate_full(&ms, &[0.25; 4]).unwrap()[0], 2.5);
        assert!(matches!(
            aggregate_full(&[a, ModelVec::zeros(3)], &[0.5, 0.5]),
            Err(LearningError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn partial_aggregation_examples() {
        let ones = ModelVec::new(vec![1.0; 3]);
        let threes = ModelVec::new(vec![3.0; 3]);
        let eights = ModelVec::new(vec![8.0; 3]);
        assert_eq!(aggregate_partial(&[(0.25, &ones), (0.25, &threes)], 4).unwrap(), ModelVec::new(vec![2.0; 3]));
        assert_eq!(aggregate_partial(&[(0.25, &eights)], 4).unwrap(), eights);
        assert_eq!(aggregate_partial(&[], 4), Err(LearningError::EmptySet));
    }

    #[test]
    fn lr_examples() {
        assert_eq!(lr_schedule(0, 1.0, 2.0, 8.0).unwrap(), 0.125);
        for t in 0..50 {
            let full = lr_schedule(t, 1.0, 0.7, 9.0).unwrap();
            assert_eq!(lr_schedule(t, 0.5, 0.7, 9.0).unwrap(), 0.5 * full);
            assert!(lr_schedule(t + 1, 1.0, 0.7, 9.0).unwrap() < full);
        }
        assert!(lr_schedule(0, 1.0, 0.0, 8.0).is_err());
        assert!(lr_schedule(0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn lr_halves_at_most_every_e_steps() {
        for e in 1..20usize {
            let gamma = e as f64;
            for t in 0..200 {
                let now = lr_schedule(t, 1.0, 1.3, gamma).unwrap();
                let later = lr_schedule(t + e, 1.0, 1.3, gamma).unwrap();
                assert!(now <= 2.0 * later);
            }
        }
    }
}
