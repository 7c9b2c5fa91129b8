//! Mean-field Gaussian surrogate.
//!
//! Stands in for a mean-field variational posterior: each coordinate gets an
//! independent Gaussian with the marginal mean and standard deviation of a
//! reference sample, so all cross-coordinate correlation is discarded.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::draws::DrawMatrix;
use crate::error::{invalid, CalError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldGaussian {
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl MeanFieldGaussian {
    pub fn fit(draws: &DrawMatrix) -> Result<Self> {
        if draws.n_draws() < 10 {
            return Err(CalError::TooFewSamples {
                needed: 10,
                got: draws.n_draws(),
            });
        }
        let means = draws.mean();
        let sds = draws.std_devs()?;
        if let Some(j) = sds.iter().position(|s| !(*s > 0.0)) {
            return Err(invalid("draws", format!("coordinate {j} has zero variance")));
        }
        Ok(Self { means, sds })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DrawMatrix {
        let d = self.means.len();
        let mut out = DrawMatrix::zeros(n, d);
        for row in out.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&self.means).zip(&self.sds) {
                let z: f64 = rng.sample(StandardNormal);
                *x = m + s * z;
            }
        }
        out
    }
}
