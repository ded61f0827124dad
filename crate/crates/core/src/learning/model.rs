use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::UpdateVector;

use super::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    /// Softmax regression.
    Linear,
    /// One tanh hidden layer.
    Mlp { hidden: usize },
}

impl Architecture {
    pub fn param_count(self, input_dim: usize, num_classes: usize) -> usize {
        match self {
            Architecture::Linear => num_classes * input_dim + num_classes,
            Architecture::Mlp { hidden } => hidden * input_dim + hidden + num_classes * hidden + num_classes,
        }
    }
}

/// Flat parameter vector plus the shape needed to interpret it.
///
/// Linear layout: `W (C x D)` row-major, then `b (C)`. MLP layout:
/// `W1 (H x D)`, `b1 (H)`, `W2 (C x H)`, `b2 (C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub num_classes: usize,
    pub params: Vec<f64>,
}

impl Model {
    pub fn zeros(architecture: Architecture, input_dim: usize, num_classes: usize) -> Self {
        Self {
            architecture,
            input_dim,
            num_classes,
            params: vec![0.0; architecture.param_count(input_dim, num_classes)],
        }
    }

    /// Zero weights for the linear model; scaled Gaussian weights (zero
    /// biases) for the MLP, whose hidden units would otherwise stay symmetric.
    pub fn init<R: Rng + ?Sized>(
        architecture: Architecture,
        input_dim: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Self {
        let mut model = Self::zeros(architecture, input_dim, num_classes);
        if let Architecture::Mlp { hidden } = architecture {
            let (d, c, h) = (input_dim, num_classes, hidden);
            let s1 = (1.0 / d as f64).sqrt();
            let s2 = (1.0 / h as f64).sqrt();
            for v in &mut model.params[..h * d] {
                *v = s1 * rng.sample::<f64, _>(StandardNormal);
            }
            let w2 = h * d + h;
            for v in &mut model.params[w2..w2 + c * h] {
                *v = s2 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        model
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Model> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        Ok(Model { params, ..self.clone() })
    }

    /// `x + delta`
    pub fn apply(&self, delta: &UpdateVector) -> Result<Model> {
        if delta.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: delta.dim(),
            });
        }
        Ok(Model {
            params: self.params.iter().zip(delta.values()).map(|(x, d)| x + d).collect(),
            ..self.clone()
        })
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.feature_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: data.feature_dim(),
            });
        }
        if data.num_classes() > self.num_classes {
            return Err(Error::DimensionMismatch {
                expected: self.num_classes,
                got: data.num_classes(),
            });
        }
        Ok(())
    }

    /// Forward pass. Returns the logits and, for the MLP, the hidden activations.
    fn forward(&self, x: &[f64], logits: &mut [f64], hidden_out: &mut Vec<f64>) {
        let (d, c) = (self.input_dim, self.num_classes);
        let p = &self.params;
        match self.architecture {
            Architecture::Linear => {
                let b = &p[c * d..];
                for k in 0..c {
                    logits[k] = b[k] + crate::vector::dot(&p[k * d..(k + 1) * d], x);
                }
            }
            Architecture::Mlp { hidden: h } => {
                let b1 = &p[h * d..h * d + h];
                hidden_out.clear();
                for j in 0..h {
                    hidden_out.push((b1[j] + crate::vector::dot(&p[j * d..(j + 1) * d], x)).tanh());
                }
                let w2 = &p[h * d + h..h * d + h + c * h];
                let b2 = &p[h * d + h + c * h..];
                for k in 0..c {
                    logits[k] = b2[k] + crate::vector::dot(&w2[k * h..(k + 1) * h], hidden_out);
                }
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut logits = vec![0.0; self.num_classes];
        self.forward(x, &mut logits, &mut Vec::new());
        logits
    }

    /// Arg-max class; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for k in 1..logits.len() {
            if logits[k] > logits[best] {
                best = k;
            }
        }
        best
    }

    /// Mean softmax cross-entropy over the rows in `indices`.
    pub fn loss(&self, data: &Dataset, indices: &[usize]) -> Result<f64> {
        self.check_data(data)?;
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut logits = vec![0.0; self.num_classes];
        let mut hidden = Vec::new();
        let mut total = 0.0;
        for &i in indices {
            self.forward(data.row(i), &mut logits, &mut hidden);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            total += lse - logits[data.label(i)];
        }
        Ok(total / indices.len() as f64)
    }

    /// Exact gradient of [`Model::loss`] with respect to the parameters.
    pub fn gradient(&self, data: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
        self.check_data(data)?;
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (d, c) = (self.input_dim, self.num_classes);
        let mut grad = vec![0.0; self.dim()];
        let mut logits = vec![0.0; c];
        let mut hidden = Vec::new();
        let mut dlogits = vec![0.0; c];
        let mut dhidden = Vec::new();
        for &i in indices {
            let x = data.row(i);
            self.forward(x, &mut logits, &mut hidden);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = logits.iter().map(|z| (z - max).exp()).sum();
            for k in 0..c {
                dlogits[k] = (logits[k] - max).exp() / denom;
            }
            dlogits[data.label(i)] -= 1.0;
            match self.architecture {
                Architecture::Linear => {
                    for k in 0..c {
                        let g = dlogits[k];
                        for (gw, xv) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                            *gw += g * xv;
                        }
                        grad[c * d + k] += g;
                    }
                }
                Architecture::Mlp { hidden: h } => {
                    let w2_off = h * d + h;
                    let b2_off = w2_off + c * h;
                    dhidden.clear();
                    dhidden.resize(h, 0.0);
                    for k in 0..c {
                        let g = dlogits[k];
                        for j in 0..h {
                            grad[w2_off + k * h + j] += g * hidden[j];
                            dhidden[j] += g * self.params[w2_off + k * h + j];
                        }
                        grad[b2_off + k] += g;
                    }
                    for j in 0..h {
                        let da = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
                        for (gw, xv) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                            *gw += da * xv;
                        }
                        grad[h * d + j] += da;
                    }
                }
            }
        }
        let n = indices.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok(grad)
    }

    /// Gradient over every row of `batch`.
    pub fn full_gradient(&self, batch: &Dataset) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..batch.len()).collect();
        self.gradient(batch, &all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts() {
        assert_eq!(Architecture::Linear.param_count(4, 3), 15);
        assert_eq!(Architecture::Mlp { hidden: 5 }.param_count(4, 3), 20 + 5 + 15 + 3);
    }

    #[test]
    fn zero_model_symmetric_gradient() {
        // balanced binary batch with mirrored features
        let data = Dataset::new(vec![1.0, 2.0, -1.0, -2.0], 2, vec![0, 1], 2).unwrap();
        let model = Model::zeros(Architecture::Linear, 2, 2);
        let g = model.full_gradient(&data).unwrap();
        // class-0 and class-1 rows are negatives of each other
        assert_eq!(g[0], -g[2]);
        assert_eq!(g[1], -g[3]);
        assert_eq!(g[4], -g[5]);
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let data = Dataset::new(vec![0.3, -1.2, 2.0, 0.5, -0.7, 0.1], 2, vec![0, 2, 1], 3).unwrap();
        let doubled = data.subset(&[0, 0, 1, 1, 2, 2]);
        let mut model = Model::zeros(Architecture::Linear, 2, 3);
        model
            .params
            .iter_mut()
            .enumerate()
            .for_each(|(i, p)| *p = (i as f64 * 0.37).sin());
        let a = model.full_gradient(&data).unwrap();
        let b = model.full_gradient(&doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
