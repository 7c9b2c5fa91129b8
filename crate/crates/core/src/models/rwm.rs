//! Adaptive random-walk Metropolis.
//!
//! Burn-in runs in two halves. The first adapts a scalar proposal scale with
//! an isotropic Gaussian proposal; at the midpoint the proposal covariance is
//! replaced by the empirical covariance of the first half and the scale is
//! adapted again. Everything is frozen once burn-in ends, so the retained
//! chain is a plain Metropolis chain.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{invalid, CalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RwmConfig {
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub initial_scale: f64,
    pub target_acceptance: f64,
}

impl Default for RwmConfig {
    fn default() -> Self {
        Self {
            iterations: 1500,
            burn_in: 1000,
            thin: 5,
            initial_scale: 0.1,
            target_acceptance: 0.3,
        }
    }
}

impl RwmConfig {
    /// Same burn-in, thinning and tuning, sized to return exactly `n` draws.
    pub fn for_draws(&self, n: usize) -> Self {
        Self {
            iterations: self.burn_in + n * self.thin.max(1),
            ..self.clone()
        }
    }

    pub fn n_kept(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(invalid("iterations", "must exceed burn-in"));
        }
        if self.thin == 0 {
            return Err(invalid("thin", "must be at least 1"));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(invalid("initial_scale", "must be positive"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(invalid("target_acceptance", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Metropolis acceptance probability for a symmetric proposal.
pub fn acceptance_probability(current_lp: f64, proposed_lp: f64) -> f64 {
    if proposed_lp.is_nan() {
        return 0.0;
    }
    (proposed_lp - current_lp).min(0.0).exp()
}

pub fn rwm_sample<F, R>(log_target: F, init: &[f64], cfg: &RwmConfig, rng: &mut R) -> Result<DrawMatrix>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let d = init.len();
    let mut current = init.to_vec();
    let mut current_lp = log_target(&current);
    if !current_lp.is_finite() {
        return Err(CalError::NonFinite {
            what: "log target at initial point",
        });
    }

    let mut chol = DMatrix::<f64>::identity(d, d);
    let mut log_scale = cfg.initial_scale.ln();
    let half = cfg.burn_in / 2;
    let mut history: Vec<f64> = Vec::with_capacity(half * d);
    let mut z = DVector::<f64>::zeros(d);
    let mut proposal = vec![0.0; d];
    let mut kept = Vec::with_capacity(cfg.n_kept() * d);

    for it in 0..cfg.iterations {
        if it == half && half >= 4 * (d + 1) {
            if let Some(l) = covariance_factor(&history[history.len() / 2..], d) {
                chol = l;
                log_scale = (2.38 / (d as f64).sqrt()).ln();
            }
        }
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let step = &chol * &z;
        let scale = log_scale.exp();
        for ((p, c), s) in proposal.iter_mut().zip(&current).zip(step.iter()) {
            *p = c + scale * s;
        }
        let proposed_lp = log_target(&proposal);
        let accept_prob = acceptance_probability(current_lp, proposed_lp);
        let u: f64 = rng.random();
        if u < accept_prob {
            current.copy_from_slice(&proposal);
            current_lp = proposed_lp;
        }
        if it < cfg.burn_in {
            let phase_start = if it < half { 0 } else { half };
            let rate = ((it - phase_start + 1) as f64).powf(-0.6);
            log_scale += rate * (accept_prob - cfg.target_acceptance);
            if it < half {
                history.extend_from_slice(&current);
            }
        } else if (it - cfg.burn_in + 1).is_multiple_of(cfg.thin) {
            kept.extend_from_slice(&current);
        }
    }
    DrawMatrix::new(kept.len() / d.max(1), d, kept)
}

fn covariance_factor(history: &[f64], d: usize) -> Option<DMatrix<f64>> {
    let draws = DrawMatrix::new(history.len() / d, d, history.to_vec()).ok()?;
    let cov = draws.covariance().ok()?;
    if (0..d).any(|i| !(cov[(i, i)] > 1e-12)) {
        return None;
    }
    nalgebra::Cholesky::new(cov).map(|c| c.l())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::stats::{mean, std_dev};

    #[test]
    fn standard_normal_long_run() {
        let cfg = RwmConfig {
            iterations: 21_000,
            burn_in: 1000,
            thin: 1,
            initial_scale: 0.5,
            target_acceptance: 0.3,
        };
        let draws = rwm_sample(|x| -0.5 * x[0] * x[0], &[3.0], &cfg, &mut rng::stream(42, &[])).unwrap();
        assert_eq!(draws.n_draws(), 20_000);
        let x = draws.column(0);
        assert!(mean(&x).abs() < 0.05, "mean {}", mean(&x));
        assert!((std_dev(&x) - 1.0).abs() < 0.05, "sd {}", std_dev(&x));
    }

    #[test]
    fn correlated_target_is_explored() {
        // bivariate normal, unit variances, correlation 0.9
        let rho: f64 = 0.9;
        let det = 1.0 - rho * rho;
        let lt = |x: &[f64]| -0.5 * (x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / det;
        let cfg = RwmConfig {
            iterations: 42_000,
            burn_in: 2000,
            thin: 2,
            initial_scale: 0.3,
            target_acceptance: 0.3,
        };
        let d = rwm_sample(lt, &[0.0, 0.0], &cfg, &mut rng::stream(1, &[])).unwrap();
        let c = crate::stats::correlation(&d.column(0), &d.column(1));
        assert!((c - rho).abs() < 0.03, "corr {c}");
    }

    #[test]
    fn higher_density_is_always_accepted() {
        assert_eq!(acceptance_probability(-3.0, -1.0), 1.0);
        assert_eq!(acceptance_probability(-3.0, -3.0), 1.0);
        assert!((acceptance_probability(0.0, -1.0) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(acceptance_probability(0.0, f64::NEG_INFINITY), 0.0);
        assert_eq!(acceptance_probability(0.0, f64::NAN), 0.0);
    }

    #[test]
    fn rejects_bad_configuration() {
        let zero = RwmConfig {
            initial_scale: 0.0,
            ..Default::default()
        };
        assert!(rwm_sample(|_| 0.0, &[0.0], &zero, &mut rng::stream(1, &[])).is_err());
        let short = RwmConfig {
            iterations: 10,
            burn_in: 10,
            ..Default::default()
        };
        assert!(short.validate().is_err());
        let err = rwm_sample(|_| f64::NEG_INFINITY, &[0.0], &RwmConfig::default(), &mut rng::stream(1, &[]));
        assert!(matches!(err, Err(CalError::NonFinite { .. })));
    }

    #[test]
    fn for_draws_sizes_output() {
        let cfg = RwmConfig::default().for_draws(37);
        assert_eq!(cfg.n_kept(), 37);
        let d = rwm_sample(|x| -0.5 * x[0] * x[0], &[0.0], &cfg, &mut rng::stream(3, &[])).unwrap();
        assert_eq!(d.n_draws(), 37);
    }

    #[test]
    fn deterministic_given_stream() {
        let cfg = RwmConfig::default();
        let a = rwm_sample(|x| -x[0].abs(), &[0.0], &cfg, &mut rng::stream(9, &[1])).unwrap();
        let b = rwm_sample(|x| -x[0].abs(), &[0.0], &cfg, &mut rng::stream(9, &[1])).unwrap();
        assert_eq!(a, b);
    }
}
