//! Weighted energy-score objective over moment-correcting transforms and its
//! maximization.

mod simplex;

pub use simplex::{minimize, SimplexOutcome};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{invalid, CalError, Result};
use crate::pipeline::CalibrationSet;
use crate::score::{dist_pow, ScoreConfig};
use crate::transform::{penalty, MomentTransform, PenaltyConfig, TransformMode, TransformParams};
use crate::weights::WeightVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop when the objective spread across the simplex drops below this.
    pub tolerance: f64,
    /// Initial simplex edge. Shift coordinates are additionally scaled by the
    /// average approximate-posterior standard deviation of that coordinate.
    pub initial_step: f64,
    /// Fresh simplices built around the incumbent after first convergence.
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-8,
            initial_step: 0.25,
            restarts: 2,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if !(self.initial_step > 0.0) {
            return Err(invalid("initial_step", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEvaluation {
    pub params: TransformParams,
    pub value: f64,
    pub per_dataset_scores: Vec<f64>,
}

/// Borrowed, pre-validated view of one objective.
struct Problem<'a> {
    thetas: Vec<&'a [f64]>,
    draws: Vec<&'a DrawMatrix>,
    centers: Vec<&'a [f64]>,
    weights: &'a [f64],
    score: &'a ScoreConfig,
    penalty: &'a PenaltyConfig,
}

impl<'a> Problem<'a> {
    fn new<D>(
        dim: usize,
        calib: &'a CalibrationSet<D>,
        w: &'a WeightVector,
        score: &'a ScoreConfig,
        penalty: &'a PenaltyConfig,
    ) -> Result<Self> {
        if calib.is_empty() {
            return Err(invalid("calibration set", "empty"));
        }
        if w.len() != calib.len() {
            return Err(CalError::DimensionMismatch {
                expected: calib.len(),
                got: w.len(),
            });
        }
        for (index, e) in calib.entries().iter().enumerate() {
            let wrap = |source: CalError| CalError::Objective {
                index,
                source: Box::new(source),
            };
            if e.draws.dim() != dim || e.theta.len() != dim {
                return Err(wrap(CalError::DimensionMismatch {
                    expected: dim,
                    got: e.draws.dim(),
                }));
            }
            if e.draws.n_draws() < 2 {
                return Err(wrap(CalError::TooFewSamples {
                    needed: 2,
                    got: e.draws.n_draws(),
                }));
            }
            if e.draws.n_draws() != score.permutation().len() {
                return Err(wrap(CalError::DimensionMismatch {
                    expected: score.permutation().len(),
                    got: e.draws.n_draws(),
                }));
            }
            if !e.draws.is_finite() || !e.theta.iter().all(|x| x.is_finite()) {
                return Err(wrap(CalError::NonFinite {
                    what: "calibration draws",
                }));
            }
        }
        let entries = calib.entries();
        Ok(Self {
            thetas: entries.iter().map(|e| e.theta.as_slice()).collect(),
            draws: entries.iter().map(|e| &e.draws).collect(),
            centers: entries.iter().map(|e| e.center.as_slice()).collect(),
            weights: w.as_slice(),
            score,
            penalty,
        })
    }

    /// Score of dataset `m` under `t`; `buf` holds the transformed draws.
    fn dataset_score(&self, m: usize, t: &MomentTransform, buf: &mut Vec<f64>) -> f64 {
        let draws = self.draws[m];
        let d = draws.dim();
        let n = draws.n_draws();
        buf.resize(n * d, 0.0);
        for (src, dst) in draws.rows().zip(buf.chunks_exact_mut(d)) {
            t.apply_into(self.centers[m], src, dst);
        }
        let beta = self.score.beta();
        let theta = self.thetas[m];
        let mut total = 0.0;
        for (i, &k) in self.score.permutation().iter().enumerate() {
            let u = &buf[i * d..(i + 1) * d];
            let partner = &buf[k * d..(k + 1) * d];
            total += 0.5 * dist_pow(u, partner, beta) - dist_pow(u, theta, beta);
        }
        total / n as f64
    }

    fn evaluate(&self, params: &TransformParams, buf: &mut Vec<f64>) -> (f64, Vec<f64>) {
        let t = params.unpack();
        let scores: Vec<f64> = (0..self.draws.len())
            .map(|m| self.dataset_score(m, &t, buf))
            .collect();
        let total: f64 = scores.iter().zip(self.weights).map(|(s, w)| s * w).sum();
        (total - penalty(params, self.penalty), scores)
    }

    fn value(&self, params: &TransformParams, buf: &mut Vec<f64>) -> f64 {
        let t = params.unpack();
        let mut total = 0.0;
        for m in 0..self.draws.len() {
            let w = self.weights[m];
            if w != 0.0 {
                total += w * self.dataset_score(m, &t, buf);
            }
        }
        total - penalty(params, self.penalty)
    }
}

/// `Σ_m w_m S(f♯draws_m, θ̄_m) − penalty(params)`.
pub fn objective<D>(
    params: &TransformParams,
    calib: &CalibrationSet<D>,
    w: &WeightVector,
    cfg: &ScoreConfig,
    pen: &PenaltyConfig,
) -> Result<ObjectiveEvaluation> {
    let problem = Problem::new(params.dim(), calib, w, cfg, pen)?;
    let (value, per_dataset_scores) = problem.evaluate(params, &mut Vec::new());
    Ok(ObjectiveEvaluation {
        params: params.clone(),
        value,
        per_dataset_scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub objective: f64,
    pub identity_objective: f64,
    /// False when no candidate beat the identity transform.
    pub improved: bool,
    pub converged: bool,
    /// Best objective after every simplex iteration, across all restarts.
    #[serde(skip)]
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Maximized {
    pub transform: MomentTransform,
    pub params: TransformParams,
    pub report: OptimizerReport,
}

/// Maximizes [`objective`] starting from the identity transform.
pub fn maximize<D>(
    calib: &CalibrationSet<D>,
    w: &WeightVector,
    score: &ScoreConfig,
    pen: &PenaltyConfig,
    mode: TransformMode,
    cfg: &OptimizerConfig,
) -> Result<Maximized> {
    cfg.validate()?;
    let dim = calib.dim();
    let problem = Problem::new(dim, calib, w, score, pen)?;
    let mut buf = Vec::new();

    let identity = TransformParams::identity(dim, mode);
    let identity_value = problem.value(&identity, &mut buf);
    if !identity_value.is_finite() {
        return Err(CalError::NonFinite {
            what: "objective at identity",
        });
    }

    let mut steps = vec![cfg.initial_step; mode.n_params(dim)];
    let scale = calib.mean_posterior_sd();
    for (s, sd) in steps.iter_mut().zip(&scale) {
        *s *= if *sd > 0.0 { *sd } else { 1.0 };
    }

    let mut neg = |x: &[f64]| -> Result<f64> {
        let p = TransformParams::from_vec(dim, mode, x.to_vec())?;
        Ok(-problem.value(&p, &mut buf))
    };

    let mut best_x = identity.as_slice().to_vec();
    let mut best_f = -identity_value;
    let mut iterations = 0;
    let mut evaluations = 0;
    let mut history = Vec::new();
    let mut converged = false;
    for round in 0..=cfg.restarts {
        let budget = cfg.max_iterations.saturating_sub(iterations);
        if budget == 0 {
            break;
        }
        let out = minimize(&mut neg, &best_x, &steps, cfg.tolerance, budget)?;
        iterations += out.iterations;
        evaluations += out.evaluations;
        converged = out.converged;
        history.extend(out.best_history.iter().map(|v| -v.min(best_f)));
        let gain = best_f - out.fx;
        if out.fx < best_f {
            best_f = out.fx;
            best_x = out.x;
        }
        if round > 0 && gain < cfg.tolerance {
            break;
        }
    }

    let improved = -best_f > identity_value;
    let params = if improved {
        TransformParams::from_vec(dim, mode, best_x)?
    } else {
        warn!("optimizer did not improve on the identity transform");
        identity
    };
    Ok(Maximized {
        transform: params.unpack(),
        report: OptimizerReport {
            iterations,
            evaluations,
            objective: if improved { -best_f } else { identity_value },
            identity_objective: identity_value,
            improved,
            converged,
            history,
        },
        params,
    })
}
