//! Conjugate Gaussian location model with a randomly perturbed posterior as
//! the approximation.
//!
//! Data are `n` draws from `N(μ, σ²)` with `σ` known and prior
//! `μ ~ N(μ₀, σ₀²)`. The approximate posterior for each dataset is
//! `N((μ_post − e_μ)/e_σ, (σ_post/e_σ)²)` where `e_μ ~ N(0.5, 0.025²)` and
//! `e_σ ~ |N(1.5, 0.025²)|` are drawn once per dataset.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Model, Observations};
use crate::bijection::BijectionStack;
use crate::draws::DrawMatrix;
use crate::error::{invalid, Result};
use crate::rng::SimRng;
use crate::stats::normal_logpdf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConjugateGaussianModel {
    pub n_obs: usize,
    pub sigma: f64,
    pub mu0: f64,
    pub sigma0: f64,
    pub error_mu_mean: f64,
    pub error_mu_sd: f64,
    pub error_sigma_mean: f64,
    pub error_sigma_sd: f64,
}

impl Default for ConjugateGaussianModel {
    fn default() -> Self {
        Self {
            n_obs: 10,
            sigma: 1.0,
            mu0: 0.0,
            sigma0: 4.0,
            error_mu_mean: 0.5,
            error_mu_sd: 0.025,
            error_sigma_mean: 1.5,
            error_sigma_sd: 0.025,
        }
    }
}

/// Mean and standard deviation of a normal posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPosterior {
    pub mean: f64,
    pub sd: f64,
}

impl ConjugateGaussianModel {
    pub fn validate(&self) -> Result<()> {
        if self.n_obs == 0 {
            return Err(invalid("n_obs", "must be at least 1"));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("sigma0", self.sigma0),
            ("error_mu_sd", self.error_mu_sd),
            ("error_sigma_sd", self.error_sigma_sd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn true_posterior(&self, data: &[f64]) -> Result<NormalPosterior> {
        gaussian_true_posterior(data, self)
    }
}

pub fn gaussian_true_posterior(data: &[f64], model: &ConjugateGaussianModel) -> Result<NormalPosterior> {
    if data.is_empty() {
        return Err(invalid("data", "need at least one observation"));
    }
    let n = data.len() as f64;
    let precision = model.sigma0.powi(-2) + n * model.sigma.powi(-2);
    let var = 1.0 / precision;
    let sum: f64 = data.iter().sum();
    let mean = var * (model.mu0 / model.sigma0.powi(2) + sum / model.sigma.powi(2));
    Ok(NormalPosterior {
        mean,
        sd: var.sqrt(),
    })
}

/// Applies a fixed perturbation `(e_μ, e_σ)` to a posterior.
pub fn perturb(post: NormalPosterior, error_mu: f64, error_sigma: f64) -> NormalPosterior {
    NormalPosterior {
        mean: (post.mean - error_mu) / error_sigma,
        sd: post.sd / error_sigma,
    }
}

/// Draws the per-dataset perturbation and applies it.
pub fn gaussian_approx_posterior<R: Rng + ?Sized>(
    post: NormalPosterior,
    model: &ConjugateGaussianModel,
    rng: &mut R,
) -> NormalPosterior {
    let error_mu = model.error_mu_mean + model.error_mu_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
    let error_sigma = (model.error_sigma_mean
        + model.error_sigma_sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
    .abs();
    perturb(post, error_mu, error_sigma)
}

fn sample_normal(post: NormalPosterior, n: usize, rng: &mut SimRng) -> Result<DrawMatrix> {
    let dist = Normal::new(post.mean, post.sd).map_err(|e| invalid("posterior", e.to_string()))?;
    let x: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    Ok(DrawMatrix::from_column(&x))
}

impl Model for ConjugateGaussianModel {
    type Data = Observations;

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn bijections(&self) -> BijectionStack {
        BijectionStack::identity(1)
    }

    fn log_prior(&self, u: &[f64]) -> f64 {
        normal_logpdf(u[0], self.mu0, self.sigma0)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Observations> {
        let dist = Normal::new(theta[0], self.sigma).map_err(|e| invalid("mu", e.to_string()))?;
        let y: Vec<f64> = (0..self.n_obs).map(|_| dist.sample(rng)).collect();
        Observations::new(vec!["y".into()], DrawMatrix::from_column(&y))
    }

    fn sample_approx(&self, data: &Observations, n: usize, rng: &mut SimRng) -> Result<DrawMatrix> {
        let post = self.true_posterior(&data.column(0))?;
        let approx = gaussian_approx_posterior(post, self, rng);
        sample_normal(approx, n, rng)
    }

    fn sample_true(&self, data: &Observations, n: usize, rng: &mut SimRng) -> Option<Result<DrawMatrix>> {
        Some(
            self.true_posterior(&data.column(0))
                .and_then(|post| sample_normal(post, n, rng)),
        )
    }
}
