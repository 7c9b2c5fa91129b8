//! Ornstein–Uhlenbeck observations at a fixed horizon.
//!
//! With `dX = γ(μ − X)dt + σ dW` and `X_0 = x₀`, the state at time `T` is
//! `N(μ + (x₀ − μ)e^{−γT}, (D/γ)(1 − e^{−2γT}))` where `D = σ²/2`. The
//! approximate model replaces this with the stationary law `N(μ, D/γ)`,
//! which ignores the initial condition and so biases `μ` toward `x₀`.
//!
//! Parameters are `(μ, D)`, sampled as `(μ, log D)` with priors
//! `μ ~ N(0, 10²)` and `D ~ Exp(rate = 1/10)`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rwm::{rwm_sample, RwmConfig};
use super::{Model, Moments, Observations};
use crate::bijection::{Bijection, BijectionStack};
use crate::draws::DrawMatrix;
use crate::error::{invalid, Result};
use crate::rng::SimRng;
use crate::stats::{normal_logpdf, LN_2PI};

/// Process constants, observation count and priors shared by the OU models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OUModel {
    pub x0: f64,
    pub gamma: f64,
    pub t_end: f64,
    pub n_obs: usize,
    pub prior_mu_sd: f64,
    pub prior_d_rate: f64,
    pub sampler: RwmConfig,
}

impl Default for OUModel {
    fn default() -> Self {
        Self {
            x0: 10.0,
            gamma: 2.0,
            t_end: 1.0,
            n_obs: 100,
            prior_mu_sd: 10.0,
            prior_d_rate: 0.1,
            sampler: RwmConfig::default(),
        }
    }
}

impl OUModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("t_end", self.t_end),
            ("prior_mu_sd", self.prior_mu_sd),
            ("prior_d_rate", self.prior_d_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if self.n_obs == 0 {
            return Err(invalid("n_obs", "must be at least 1"));
        }
        self.sampler.validate()
    }

    fn decay(&self) -> f64 {
        (-self.gamma * self.t_end).exp()
    }

    /// Mean and variance of `X_T`.
    pub fn transition_moments(&self, mu: f64, d: f64) -> (f64, f64) {
        let e = self.decay();
        (
            mu + (self.x0 - mu) * e,
            d / self.gamma * (1.0 - e * e),
        )
    }

    /// Mean and variance of the stationary law.
    pub fn limiting_moments(&self, mu: f64, d: f64) -> (f64, f64) {
        (mu, d / self.gamma)
    }

    /// Prior over `(μ, log D)` including the log-Jacobian of `D = e^u`.
    pub(crate) fn log_prior_mu_logd(&self, mu: f64, log_d: f64) -> f64 {
        let d = log_d.exp();
        normal_logpdf(mu, 0.0, self.prior_mu_sd) + self.prior_d_rate.ln() - self.prior_d_rate * d
            + log_d
    }

    /// Moment estimates of `(μ, D)` under the exact transition law.
    pub(crate) fn moment_estimate(&self, mean: f64, var: f64) -> (f64, f64) {
        let e = self.decay();
        let mu = (mean - self.x0 * e) / (1.0 - e);
        let d = var * self.gamma / (1.0 - e * e);
        (mu, d.max(1e-6))
    }
}

fn check_d(d: f64) -> Result<()> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(invalid("D", format!("{d} must be positive")))
    }
}

pub fn ou_transition_logpdf(x: f64, model: &OUModel, mu: f64, d: f64) -> Result<f64> {
    check_d(d)?;
    let (m, v) = model.transition_moments(mu, d);
    Ok(normal_logpdf(x, m, v.sqrt()))
}

pub fn ou_limiting_logpdf(x: f64, model: &OUModel, mu: f64, d: f64) -> Result<f64> {
    check_d(d)?;
    let (m, v) = model.limiting_moments(mu, d);
    Ok(normal_logpdf(x, m, v.sqrt()))
}

/// i.i.d. normal log-likelihood from sufficient statistics.
fn normal_loglik(stats: &Moments, mean: f64, var: f64) -> f64 {
    -0.5 * stats.n * (LN_2PI + var.ln()) - 0.5 * stats.centered_ss(mean) / var
}

/// Univariate OU with the stationary-law surrogate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct UnivariateOUModel {
    pub process: OUModel,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Likelihood {
    Exact,
    Limiting,
}

impl UnivariateOUModel {
    fn posterior_draws(
        &self,
        data: &Observations,
        n: usize,
        lik: Likelihood,
        rng: &mut SimRng,
    ) -> Result<DrawMatrix> {
        let x = data.column(0);
        let stats = Moments::univariate(&x);
        let p = &self.process;
        let log_target = |u: &[f64]| {
            let d = u[1].exp();
            let (m, v) = match lik {
                Likelihood::Exact => p.transition_moments(u[0], d),
                Likelihood::Limiting => p.limiting_moments(u[0], d),
            };
            p.log_prior_mu_logd(u[0], u[1]) + normal_loglik(&stats, m, v)
        };
        let mean = stats.s1 / stats.n;
        let var = (stats.s2 / stats.n - mean * mean).max(1e-6);
        let (mu0, d0) = match lik {
            Likelihood::Exact => p.moment_estimate(mean, var),
            Likelihood::Limiting => (mean, var * p.gamma),
        };
        rwm_sample(log_target, &[mu0, d0.ln()], &p.sampler.for_draws(n), rng)
    }
}

impl Model for UnivariateOUModel {
    type Data = Observations;

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into(), "D".into()]
    }

    fn bijections(&self) -> BijectionStack {
        BijectionStack::new(vec![Bijection::Identity, Bijection::Log])
    }

    fn log_prior(&self, u: &[f64]) -> f64 {
        self.process.log_prior_mu_logd(u[0], u[1])
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Observations> {
        check_d(theta[1])?;
        let (m, v) = self.process.transition_moments(theta[0], theta[1]);
        let dist = Normal::new(m, v.sqrt()).map_err(|e| invalid("theta", e.to_string()))?;
        let x: Vec<f64> = (0..self.process.n_obs).map(|_| dist.sample(rng)).collect();
        Observations::new(vec!["x".into()], DrawMatrix::from_column(&x))
    }

    fn sample_approx(&self, data: &Observations, n: usize, rng: &mut SimRng) -> Result<DrawMatrix> {
        self.posterior_draws(data, n, Likelihood::Limiting, rng)
    }

    fn sample_true(&self, data: &Observations, n: usize, rng: &mut SimRng) -> Option<Result<DrawMatrix>> {
        Some(self.posterior_draws(data, n, Likelihood::Exact, rng))
    }
}
