use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Up to three metric values handed to the classifier.
///
/// Absent inputs are stored as `0.0`; `arity` says how many are meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityFeatureVector {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub arity: usize,
}

impl QualityFeatureVector {
    pub fn one(x1: f64) -> Self {
        Self { x1, x2: 0.0, x3: 0.0, arity: 1 }
    }

    pub fn two(x1: f64, x2: f64) -> Self {
        Self { x1, x2, x3: 0.0, arity: 2 }
    }

    pub fn three(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3, arity: 3 }
    }

    pub fn from_slice(xs: &[f64]) -> Result<Self> {
        let f = match *xs {
            [a] => Self::one(a),
            [a, b] => Self::two(a, b),
            [a, b, c] => Self::three(a, b, c),
            _ => return Err(Error::data(format!("feature arity must be 1..=3, got {}", xs.len()))),
        };
        f.validate()?;
        Ok(f)
    }

    /// The meaningful inputs, `arity` long.
    pub fn values(&self) -> Vec<f64> {
        [self.x1, self.x2, self.x3][..self.arity].to_vec()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.arity) {
            return Err(Error::data(format!("feature arity must be 1..=3, got {}", self.arity)));
        }
        if !self.values().iter().all(|v| v.is_finite()) {
            return Err(Error::data("non-finite feature value"));
        }
        Ok(())
    }
}
