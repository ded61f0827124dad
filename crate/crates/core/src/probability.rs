//! Helpers for finite probability vectors.

use rand::Rng;

use crate::error::{Error, Result};

pub const PROB_TOLERANCE: f64 = 1e-9;

/// Non-negative, finite, and summing to one within [`PROB_TOLERANCE`].
pub fn validate(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty".into()));
    }
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidDistribution(format!("entry {v} is not a probability")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("sums to {total}")));
    }
    Ok(())
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub fn point_mass(n: usize, index: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    p[index] = 1.0;
    p
}

/// Inverse-CDF draw. Zero-probability entries are never returned.
pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let total: f64 = p.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in p.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last_positive = i;
        acc += w;
        if target < acc {
            return i;
        }
    }
    last_positive
}

/// `sum_j p[j] * values[j]`
pub fn expectation(p: &[f64], values: &[f64]) -> f64 {
    p.iter().zip(values).map(|(a, b)| a * b).sum()
}
