//! Coordinate-wise maps between constrained parameters and `ℝ^d`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bijection {
    Identity,
    /// `(0, ∞) ↔ ℝ` via `log`.
    Log,
    /// `(0, 1) ↔ ℝ` via `logit`.
    Logit,
}

impl Bijection {
    pub fn to_unconstrained(self, x: f64) -> Result<f64> {
        let u = match self {
            Bijection::Identity => x,
            Bijection::Log => {
                if !(x > 0.0) {
                    return Err(invalid("parameter", format!("{x} must be positive")));
                }
                x.ln()
            }
            Bijection::Logit => {
                if !(x > 0.0 && x < 1.0) {
                    return Err(invalid("parameter", format!("{x} must be in (0, 1)")));
                }
                (x / (1.0 - x)).ln()
            }
        };
        Ok(u)
    }

    pub fn to_constrained(self, u: f64) -> f64 {
        match self {
            Bijection::Identity => u,
            Bijection::Log => u.exp(),
            Bijection::Logit => logistic(u),
        }
    }

    /// `log |dx/du|` for `x = to_constrained(u)`.
    pub fn log_jacobian(self, u: f64) -> f64 {
        match self {
            Bijection::Identity => 0.0,
            Bijection::Log => u,
            // log σ(u) + log(1 − σ(u)), written to stay finite for large |u|
            Bijection::Logit => -u.abs() - 2.0 * (-u.abs()).exp().ln_1p(),
        }
    }
}

pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BijectionStack(Vec<Bijection>);

impl BijectionStack {
    pub fn new(maps: Vec<Bijection>) -> Self {
        Self(maps)
    }

    pub fn identity(dim: usize) -> Self {
        Self(vec![Bijection::Identity; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn maps(&self) -> &[Bijection] {
        &self.0
    }

    fn check(&self, len: usize) -> Result<()> {
        if len == self.0.len() {
            Ok(())
        } else {
            Err(CalError::DimensionMismatch {
                expected: self.0.len(),
                got: len,
            })
        }
    }

    pub fn to_unconstrained(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        self.0
            .iter()
            .zip(x)
            .map(|(b, &v)| b.to_unconstrained(v))
            .collect()
    }

    pub fn to_constrained(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check(u.len())?;
        Ok(self.0.iter().zip(u).map(|(b, &v)| b.to_constrained(v)).collect())
    }

    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        self.0.iter().zip(u).map(|(b, &v)| b.log_jacobian(v)).sum()
    }

    pub fn constrain_draws(&self, draws: &crate::DrawMatrix) -> Result<crate::DrawMatrix> {
        self.check(draws.dim())?;
        Ok(draws.map_rows(|src, dst| {
            for ((o, b), &v) in dst.iter_mut().zip(&self.0).zip(src) {
                *o = b.to_constrained(v);
            }
        }))
    }
}
