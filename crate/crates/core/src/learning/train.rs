use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::vector::{norm, sq_dist, UpdateVector};

use super::data::Dataset;
use super::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub eta: f64,
    /// Weight on the fresh gradient: `m <- (1 - beta) m + beta g`. `beta = 1`
    /// is plain SGD.
    pub beta: f64,
    pub local_steps: usize,
    pub batch_size: usize,
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", format!("must be positive, got {}", self.eta)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid("beta", format!("must lie in (0, 1], got {}", self.beta)));
        }
        if self.local_steps == 0 {
            return Err(invalid("local_steps", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Client momentum. `m` is `None` until the first step, which sets it to the
/// first gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    pub m: Option<Vec<f64>>,
    pub beta: f64,
}

impl MomentumState {
    pub fn new(beta: f64) -> Self {
        Self { m: None, beta }
    }

    fn step(&mut self, grad: Vec<f64>) -> &[f64] {
        let beta = self.beta;
        match &mut self.m {
            Some(m) => {
                for (mv, g) in m.iter_mut().zip(&grad) {
                    *mv = (1.0 - beta) * *mv + beta * g;
                }
            }
            None => self.m = Some(grad),
        }
        self.m.as_deref().expect("set above")
    }
}

/// Minibatch of row indices; the whole shard when it is smaller than `batch_size`.
pub fn sample_batch<R: Rng + ?Sized>(len: usize, batch_size: usize, rng: &mut R) -> Vec<usize> {
    if len <= batch_size {
        return (0..len).collect();
    }
    let mut picked = index::sample(rng, len, batch_size).into_vec();
    picked.sort_unstable();
    picked
}

/// Local momentum SGD. Returns `Δx = x_final - x_initial` and the updated
/// momentum. The trajectory is tracked as `x_initial + Δx`, so applying the
/// returned update to `model` reproduces the trained parameters exactly.
pub fn local_train<R: Rng + ?Sized>(
    model: &Model,
    shard: &Dataset,
    params: &TrainParams,
    momentum: MomentumState,
    rng: &mut R,
) -> Result<(UpdateVector, MomentumState)> {
    params.validate()?;
    if shard.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut momentum = MomentumState {
        beta: params.beta,
        ..momentum
    };
    if let Some(m) = &momentum.m {
        if m.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: m.len(),
            });
        }
    }
    let mut delta = vec![0.0; model.dim()];
    let mut current = model.clone();
    for step in 0..params.local_steps {
        if step > 0 {
            for ((c, x), d) in current.params.iter_mut().zip(&model.params).zip(&delta) {
                *c = x + d;
            }
        }
        let batch = sample_batch(shard.len(), params.batch_size, rng);
        let grad = current.gradient(shard, &batch)?;
        let m = momentum.step(grad);
        for (d, mv) in delta.iter_mut().zip(m) {
            *d -= params.eta * mv;
        }
    }
    let update = UpdateVector::new(delta)?;
    Ok((update, momentum))
}

/// Fraction of rows whose arg-max prediction matches the label.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = (0..dataset.len())
        .filter(|&i| model.predict(dataset.row(i)) == dataset.label(i))
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}

/// The server's own update on its root dataset: local training without momentum.
pub fn compute_trusted_update<R: Rng + ?Sized>(
    model: &Model,
    root_dataset: &Dataset,
    eta: f64,
    local_steps: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<UpdateVector> {
    let params = TrainParams {
        eta,
        beta: 1.0,
        local_steps,
        batch_size,
    };
    local_train(model, root_dataset, &params, MomentumState::new(1.0), rng).map(|(u, _)| u)
}

/// Mean squared deviation of minibatch gradients from the shard gradient,
/// over `batches` draws. A proxy for the local variance bound.
pub fn gradient_variance<R: Rng + ?Sized>(
    model: &Model,
    shard: &Dataset,
    batch_size: usize,
    batches: usize,
    rng: &mut R,
) -> Result<f64> {
    if batches == 0 {
        return Err(invalid("batches", "must be >= 1"));
    }
    let full = model.full_gradient(shard)?;
    let mut total = 0.0;
    for _ in 0..batches {
        let batch = sample_batch(shard.len(), batch_size, rng);
        total += sq_dist(&model.gradient(shard, &batch)?, &full);
    }
    Ok(total / batches as f64)
}

/// `max_i |grad f_i - grad F|^2` over the non-empty shards, where `F` is the
/// loss over their union. A proxy for the heterogeneity bound.
pub fn gradient_heterogeneity(model: &Model, shards: &[Dataset]) -> Result<f64> {
    let nonempty: Vec<&Dataset> = shards.iter().filter(|s| !s.is_empty()).collect();
    if nonempty.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: usize = nonempty.iter().map(|s| s.len()).sum();
    let grads: Vec<Vec<f64>> = nonempty.iter().map(|s| model.full_gradient(s)).collect::<Result<_>>()?;
    let mut global = vec![0.0; model.dim()];
    for (g, s) in grads.iter().zip(&nonempty) {
        let w = s.len() as f64 / total as f64;
        for (a, v) in global.iter_mut().zip(g) {
            *a += w * v;
        }
    }
    Ok(grads.iter().map(|g| sq_dist(g, &global)).fold(0.0, f64::max))
}

/// Largest secant quotient `|grad F(x) - grad F(y)| / |x - y|` over pairs of
/// parameter vectors. A lower estimate of the smoothness constant.
pub fn estimate_smoothness(model: &Model, data: &Dataset, trajectory: &[Vec<f64>]) -> Result<f64> {
    let grads: Vec<Vec<f64>> = trajectory
        .iter()
        .map(|p| model.with_params(p.clone())?.full_gradient(data))
        .collect::<Result<_>>()?;
    let mut best: f64 = 0.0;
    for i in 0..trajectory.len() {
        for j in (i + 1)..trajectory.len() {
            let dx = sq_dist(&trajectory[i], &trajectory[j]).sqrt();
            if dx > 0.0 {
                best = best.max(sq_dist(&grads[i], &grads[j]).sqrt() / dx);
            }
        }
    }
    Ok(best)
}

/// `|grad F(x)|^2` over `data`.
pub fn gradient_norm_sq(model: &Model, data: &Dataset) -> Result<f64> {
    let g = model.full_gradient(data)?;
    Ok(norm(&g).powi(2))
}
