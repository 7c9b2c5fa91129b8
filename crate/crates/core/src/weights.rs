//! Importance weights `w(θ, ỹ) = π(θ)/π̄(θ) · v(ỹ)`, quantile clipping and
//! the unit-weight shortcut.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CalError, Result};
use crate::stats;

/// Nonnegative, finite, not-all-zero weights, one per calibration dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("weights", "empty"));
        }
        if values.iter().any(|w| !w.is_finite()) {
            return Err(CalError::NonFinite { what: "weights" });
        }
        if values.iter().any(|&w| w < 0.0) {
            return Err(invalid("weights", "negative entry"));
        }
        if values.iter().all(|&w| w == 0.0) {
            return Err(invalid("weights", "all zero"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Rescaled to sum to one.
    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.0.iter().sum();
        self.0.iter().map(|w| w / total).collect()
    }

    /// Kish effective sample size.
    pub fn effective_sample_size(&self) -> f64 {
        let s: f64 = self.0.iter().sum();
        let s2: f64 = self.0.iter().map(|w| w * w).sum();
        s * s / s2
    }
}

/// Change-of-measure function `v(ỹ)` applied on top of the prior ratio.
pub enum StabilizerSpec<D> {
    /// `v ≡ 1`.
    Unit,
    User(Box<dyn Fn(&D) -> f64 + Send + Sync>),
}

impl<D> StabilizerSpec<D> {
    pub fn user(f: impl Fn(&D) -> f64 + Send + Sync + 'static) -> Self {
        StabilizerSpec::User(Box::new(f))
    }

    pub fn evaluate(&self, data: &D) -> f64 {
        match self {
            StabilizerSpec::Unit => 1.0,
            StabilizerSpec::User(f) => f(data),
        }
    }
}

impl<D> Default for StabilizerSpec<D> {
    fn default() -> Self {
        StabilizerSpec::Unit
    }
}

impl<D> std::fmt::Debug for StabilizerSpec<D> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabilizerSpec::Unit => f.write_str("Unit"),
            StabilizerSpec::User(_) => f.write_str("User(..)"),
        }
    }
}

/// `w_m = exp(log π(θ̄_m) − log π̄(θ̄_m)) · v(ỹ_m)`.
///
/// Both log-densities must be expressed in the same (unconstrained)
/// coordinates so that Jacobian terms cancel in the ratio.
pub fn raw_weights<D, P, Q>(
    log_prior: P,
    log_importance: Q,
    stabilizer: &StabilizerSpec<D>,
    thetas: &[Vec<f64>],
    datasets: &[D],
) -> Result<WeightVector>
where
    P: Fn(&[f64]) -> f64,
    Q: Fn(&[f64]) -> f64,
{
    if thetas.len() != datasets.len() {
        return Err(CalError::DimensionMismatch {
            expected: thetas.len(),
            got: datasets.len(),
        });
    }
    let mut values = Vec::with_capacity(thetas.len());
    for (index, (theta, data)) in thetas.iter().zip(datasets).enumerate() {
        let lp = log_prior(theta);
        let li = log_importance(theta);
        if !lp.is_finite() || !li.is_finite() {
            return Err(CalError::NonFiniteLogDensity { index });
        }
        let v = stabilizer.evaluate(data);
        if !v.is_finite() || v < 0.0 {
            return Err(invalid(
                "stabilizer",
                format!("returned {v} for calibration index {index}"),
            ));
        }
        values.push((lp - li).exp() * v);
    }
    WeightVector::new(values)
}

/// Caps every weight at the empirical `(1 − α)` quantile of the weights.
///
/// `α = 0` is a no-op and `α = 1` clips everything to the minimum.
pub fn clip(w: &WeightVector, alpha: f64) -> Result<WeightVector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("{alpha} not in [0, 1]")));
    }
    let cap = stats::quantile(&w.0, 1.0 - alpha);
    WeightVector::new(w.0.iter().map(|&x| x.min(cap)).collect())
}

pub fn unit_weights(m: usize) -> Result<WeightVector> {
    if m == 0 {
        return Err(invalid("M", "need at least one weight"));
    }
    WeightVector::new(vec![1.0; m])
}
