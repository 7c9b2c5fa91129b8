//! Bivariate OU observations with a mixing parameter `ρ`.
//!
//! `Y₁ = X₁` and `Y₂ = ρX₁ + (1 − ρ)X₂` where `X₁, X₂` are independent OU
//! states at time `T` sharing `(μ, γ, σ)`. Parameters are `(μ, D, ρ)`,
//! sampled as `(μ, log D, logit ρ)` with `ρ ~ U(0, 1)`.
//!
//! The approximate posterior is a mean-field Gaussian matched to the
//! marginal moments of an exact-posterior MCMC run in unconstrained space,
//! mimicking a mean-field variational fit: accurate marginals, no
//! correlation between parameters.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::meanfield::MeanFieldGaussian;
use super::ou::OUModel;
use super::rwm::rwm_sample;
use super::{Model, Moments, Observations};
use crate::bijection::{logistic, Bijection, BijectionStack};
use crate::draws::DrawMatrix;
use crate::error::{invalid, Result};
use crate::rng::SimRng;
use crate::stats::LN_2PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BivariateOUModel {
    pub process: OUModel,
    /// Exact-posterior draws used to fit the mean-field surrogate.
    pub surrogate_fit_draws: usize,
}

impl Default for BivariateOUModel {
    fn default() -> Self {
        Self {
            process: OUModel {
                x0: 5.0,
                ..OUModel::default()
            },
            surrogate_fit_draws: 1000,
        }
    }
}

/// Simulates `n` observation pairs for parameters `(μ, D, ρ)`.
pub fn bivariate_ou_simulate<R: Rng + ?Sized>(
    model: &BivariateOUModel,
    params: (f64, f64, f64),
    n: usize,
    rng: &mut R,
) -> Result<Observations> {
    let (mu, d, rho) = params;
    if !(d > 0.0) {
        return Err(invalid("D", format!("{d} must be positive")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} not in [0, 1]")));
    }
    let (m, v) = model.process.transition_moments(mu, d);
    let sd = v.sqrt();
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let x1 = m + sd * rng.sample::<f64, _>(StandardNormal);
        let x2 = m + sd * rng.sample::<f64, _>(StandardNormal);
        data.push(x1);
        data.push(rho * x1 + (1.0 - rho) * x2);
    }
    Observations::new(vec!["y1".into(), "y2".into()], DrawMatrix::new(n, 2, data)?)
}

/// Correlation between `Y₁` and `Y₂` implied by `ρ`.
pub fn implied_correlation(rho: f64) -> f64 {
    rho / (rho * rho + (1.0 - rho) * (1.0 - rho)).sqrt()
}

impl BivariateOUModel {
    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        if self.surrogate_fit_draws < 10 {
            return Err(invalid("surrogate_fit_draws", "must be at least 10"));
        }
        Ok(())
    }

    /// Exact log-likelihood of the pairs summarized in `stats`.
    fn loglik(&self, stats: &Moments, mu: f64, d: f64, rho: f64) -> f64 {
        let (m, v) = self.process.transition_moments(mu, d);
        let one_minus = 1.0 - rho;
        let q = rho * rho + one_minus * one_minus;
        let quad = (q * stats.centered_ss(m) - 2.0 * rho * stats.centered_cross(m)
            + stats.centered_ss2(m))
            / (v * one_minus * one_minus);
        -stats.n * (LN_2PI + v.ln() + one_minus.ln()) - 0.5 * quad
    }

    fn exact_draws(&self, data: &Observations, n: usize, rng: &mut SimRng) -> Result<DrawMatrix> {
        let stats = Moments::bivariate(data.values());
        let log_target = |u: &[f64]| {
            let rho = logistic(u[2]);
            if !(rho < 1.0) {
                return f64::NEG_INFINITY;
            }
            self.log_prior(u) + self.loglik(&stats, u[0], u[1].exp(), rho)
        };
        let mean = (stats.s1 + stats.t1) / (2.0 * stats.n);
        let m1 = stats.s1 / stats.n;
        let m2 = stats.t1 / stats.n;
        let var1 = (stats.s2 / stats.n - m1 * m1).max(1e-6);
        let cov = stats.st / stats.n - m1 * m2;
        let rho0 = (cov / var1).clamp(0.05, 0.95);
        let (mu0, d0) = self.process.moment_estimate(mean, var1);
        let init = [mu0, d0.ln(), (rho0 / (1.0 - rho0)).ln()];
        rwm_sample(log_target, &init, &self.process.sampler.for_draws(n), rng)
    }
}

impl Model for BivariateOUModel {
    type Data = Observations;

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into(), "D".into(), "rho".into()]
    }

    fn bijections(&self) -> BijectionStack {
        BijectionStack::new(vec![Bijection::Identity, Bijection::Log, Bijection::Logit])
    }

    fn log_prior(&self, u: &[f64]) -> f64 {
        // U(0, 1) on ρ contributes only its Jacobian
        self.process.log_prior_mu_logd(u[0], u[1]) + Bijection::Logit.log_jacobian(u[2])
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Observations> {
        bivariate_ou_simulate(self, (theta[0], theta[1], theta[2]), self.process.n_obs, rng)
    }

    fn sample_approx(&self, data: &Observations, n: usize, rng: &mut SimRng) -> Result<DrawMatrix> {
        let reference = self.exact_draws(data, self.surrogate_fit_draws, rng)?;
        Ok(MeanFieldGaussian::fit(&reference)?.sample(n, rng))
    }

    fn sample_true(&self, data: &Observations, n: usize, rng: &mut SimRng) -> Option<Result<DrawMatrix>> {
        Some(self.exact_draws(data, n, rng))
    }
}
