//! Flat real-valued update vectors and the small amount of linear algebra
//! the rest of the crate needs.

use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A model update (or momentum) flattened to a single vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateVector {
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    client_id: Option<usize>,
}

impl UpdateVector {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            values,
            client_id: None,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            client_id: None,
        }
    }

    /// Internal constructor for values produced by arithmetic on finite inputs.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self {
            values,
            client_id: None,
        }
    }

    pub fn with_client(mut self, id: usize) -> Self {
        self.client_id = Some(id);
        self
    }

    pub fn client_id(&self) -> Option<usize> {
        self.client_id
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn dot(&self, other: &UpdateVector) -> f64 {
        dot(&self.values, &other.values)
    }

    /// Short hex fingerprint of the exact bit pattern of the values.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.values {
            hasher.update(v.to_bits().to_le_bytes());
        }
        let out = hasher.finalize();
        out[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Deref for UpdateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl Index<usize> for UpdateVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl TryFrom<Vec<f64>> for UpdateVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Checks that `updates` is non-empty, shares one dimension, and is finite.
/// Returns the common dimension.
pub(crate) fn check_uniform(updates: &[UpdateVector]) -> Result<usize> {
    let first = updates.first().ok_or(Error::EmptyInput)?;
    let dim = first.dim();
    for u in updates {
        if u.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: u.dim(),
            });
        }
        if let Some(index) = u.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
    }
    Ok(dim)
}

/// Unweighted coordinate-wise mean.
pub fn mean_of(updates: &[UpdateVector]) -> Result<UpdateVector> {
    let dim = check_uniform(updates)?;
    // accumulate deviations from the first input so identical inputs are exact
    let base = updates[0].values();
    let mut acc = vec![0.0; dim];
    for u in &updates[1..] {
        for ((a, v), b) in acc.iter_mut().zip(u.values()).zip(base) {
            *a += v - b;
        }
    }
    let n = updates.len() as f64;
    let out = acc.iter().zip(base).map(|(a, b)| b + a / n).collect();
    Ok(UpdateVector::from_raw(out))
}

/// Coordinate-wise population standard deviation (zero for a single input).
pub fn std_of(updates: &[UpdateVector]) -> Result<UpdateVector> {
    let mean = mean_of(updates)?;
    let mut acc = vec![0.0; mean.dim()];
    for u in updates {
        for ((a, v), m) in acc.iter_mut().zip(u.values()).zip(mean.values()) {
            *a += (v - m) * (v - m);
        }
    }
    let n = updates.len() as f64;
    acc.iter_mut().for_each(|a| *a = (*a / n).sqrt());
    Ok(UpdateVector::from_raw(acc))
}

/// Mean of `values` computed as offsets from the first element.
pub(crate) fn shifted_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = values.into_iter();
    let Some(base) = it.next() else {
        return 0.0;
    };
    let (mut acc, mut n) = (0.0, 1.0);
    for v in it {
        acc += v - base;
        n += 1.0;
    }
    base + acc / n
}

/// `a + scale * b`
pub fn axpy(a: &[f64], scale: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + scale * y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert_eq!(
            UpdateVector::new(vec![1.0, f64::NAN]).unwrap_err(),
            Error::NonFinite { index: 1 }
        );
        assert!(UpdateVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn population_std() {
        let v = vec![
            UpdateVector::new(vec![0.0]).unwrap(),
            UpdateVector::new(vec![2.0]).unwrap(),
        ];
        assert_eq!(std_of(&v).unwrap().values(), &[1.0]);
        assert_eq!(std_of(&v[..1]).unwrap().values(), &[0.0]);
    }

    #[test]
    fn digest_tracks_bits() {
        let a = UpdateVector::new(vec![0.0, 1.0]).unwrap();
        let b = UpdateVector::new(vec![-0.0, 1.0]).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
        assert_eq!(a.digest().len(), 16);
    }
}
