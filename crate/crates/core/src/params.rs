//! Dense parameter-vector algebra.
//!
//! Every model, client update, reference estimate and optimizer moment is a
//! [`ParameterVector`]. Entries are always finite; construction rejects
//! NaN/Inf so that a diverging run shows up as a large number instead of a
//! NaN cascade.

use serde::{Deserialize, Serialize};

use crate::error::{FlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(FlError::usage("parameter vector must be non-empty"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(FlError::NonFinite { index });
        }
        Ok(ParameterVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "parameter vector must be non-empty");
        ParameterVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn ensure_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(FlError::DimMismatch {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Elementwise map producing a new vector; the result is re-validated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        ParameterVector::new(self.0.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise binary map over two equal-length vectors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        other.ensure_dim(self.dim())?;
        ParameterVector::new(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

impl<'de> Deserialize<'de> for ParameterVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        ParameterVector::new(values).map_err(serde::de::Error::custom)
    }
}

/// `Σ wᵢ·vᵢ`. Weights are used as given, not renormalized.
pub fn weighted_sum(vectors: &[&ParameterVector], weights: &[f64]) -> Result<ParameterVector> {
    let first = vectors
        .first()
        .ok_or_else(|| FlError::usage("weighted_sum needs at least one vector"))?;
    if vectors.len() != weights.len() {
        return Err(FlError::usage(format!(
            "weighted_sum got {} vectors but {} weights",
            vectors.len(),
            weights.len()
        )));
    }
    if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
        return Err(FlError::usage(format!("weight {index} is not finite")));
    }
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for (v, &w) in vectors.iter().zip(weights) {
        v.ensure_dim(dim)?;
        for (a, &x) in acc.iter_mut().zip(v.as_slice()) {
            *a += w * x;
        }
    }
    ParameterVector::new(acc)
}

/// Squared Euclidean distance.
pub fn l2_dist_sq(a: &ParameterVector, b: &ParameterVector) -> Result<f64> {
    b.ensure_dim(a.dim())?;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// `a + scale·b`.
pub fn axpy(a: &ParameterVector, scale: f64, b: &ParameterVector) -> Result<ParameterVector> {
    a.zip_map(b, |x, y| x + scale * y)
}
