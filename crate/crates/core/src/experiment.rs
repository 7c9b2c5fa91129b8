//! Replicated experiments: calibrate on many observed datasets drawn at a
//! fixed true parameter and summarize approximate, adjusted and exact
//! posteriors side by side.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{coverage_curve, default_grid, summarize, CoverageCurve, ReplicateDraws, SummaryMetrics};
use crate::draws::DrawMatrix;
use crate::error::{invalid, CalError, Result};
use crate::models::Model;
use crate::pipeline::{calibrate_alphas, with_workers, CalibrationConfig, CalibrationResult};
use crate::rng::{self, tag};
use crate::weights::StabilizerSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub calibration: CalibrationConfig,
    /// Clipping levels; the first one feeds the coverage curve.
    pub alphas: Vec<f64>,
    pub replicates: usize,
    /// Data-generating parameter in constrained coordinates.
    pub truth: Vec<f64>,
    /// Also sample the exact posterior when the model provides one.
    pub include_true: bool,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(truth: Vec<f64>) -> Self {
        Self {
            calibration: CalibrationConfig::default(),
            alphas: vec![1.0],
            replicates: 100,
            truth,
            include_true: true,
            grid: default_grid(),
            seed: 0,
            workers: None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        if self.alphas.is_empty() {
            return Err(invalid("alpha", "at least one value required"));
        }
        if self.truth.len() != dim {
            return Err(CalError::DimensionMismatch {
                expected: dim,
                got: self.truth.len(),
            });
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be at least 1"));
        }
        self.calibration.validate()
    }
}

/// Method label used in summary tables.
pub fn adjust_label(alpha: f64) -> String {
    format!("adjust({alpha})")
}

pub struct ReplicateOutcome<D> {
    pub index: usize,
    pub seed: u64,
    pub observed: D,
    /// One result per configured `α`, in order.
    pub results: Vec<CalibrationResult>,
    /// Exact posterior draws, constrained.
    pub true_draws: Option<DrawMatrix>,
}

pub struct ExperimentOutcome<D> {
    pub parameters: Vec<String>,
    pub replicates: Vec<ReplicateOutcome<D>>,
    /// Rows `approx`, `adjust(α)` per `α`, then `true` when available.
    pub summary: Vec<SummaryMetrics>,
    /// Calibration coverage pooled over replicates for the first `α`.
    pub coverage: CoverageCurve,
}

fn run_replicate<M: Model>(
    model: &M,
    cfg: &ExperimentConfig,
    stabilizer: &StabilizerSpec<M::Data>,
    index: usize,
) -> Result<ReplicateOutcome<M::Data>> {
    let seed = rng::derive_seed(cfg.seed, &[tag::REPLICATE, index as u64]);
    let observed = model.simulate(&cfg.truth, &mut rng::stream(seed, &[tag::OBSERVED, 1]))?;
    let calib = CalibrationConfig {
        seed,
        workers: None,
        ..cfg.calibration.clone()
    };
    let results = calibrate_alphas(model, &observed, &calib, &cfg.alphas, stabilizer)?;
    let true_draws = if cfg.include_true {
        match model.sample_true(&observed, calib.n, &mut rng::stream(seed, &[tag::TRUE_POSTERIOR])) {
            Some(d) => Some(model.bijections().constrain_draws(&d?)?),
            None => None,
        }
    } else {
        None
    };
    Ok(ReplicateOutcome {
        index,
        seed,
        observed,
        results,
        true_draws,
    })
}

/// Runs `cfg.replicates` independent calibrations in parallel. Output is
/// independent of the worker count.
pub fn run_experiment<M: Model>(
    model: &M,
    cfg: &ExperimentConfig,
    stabilizer: &StabilizerSpec<M::Data>,
) -> Result<ExperimentOutcome<M::Data>>
where
    M::Data: Send,
{
    cfg.validate(model.dim())?;
    model.bijections().to_unconstrained(&cfg.truth)?;
    let outcomes: Vec<Result<ReplicateOutcome<M::Data>>> = with_workers(cfg.workers, || {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|k| {
                run_replicate(model, cfg, stabilizer, k).map_err(|source| CalError::Replicate {
                    index: k,
                    source: Box::new(source),
                })
            })
            .collect()
    })?;
    let replicates = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let parameters = model.param_names();
    let truth = cfg.truth.as_slice();

    let mut summary = Vec::new();
    let approx: Vec<_> = replicates
        .iter()
        .map(|r| ReplicateDraws {
            draws: &r.results[0].approx_draws,
            truth,
        })
        .collect();
    summary.push(summarize("approx", &approx, &parameters)?);
    for (a, &alpha) in cfg.alphas.iter().enumerate() {
        let adjusted: Vec<_> = replicates
            .iter()
            .map(|r| ReplicateDraws {
                draws: &r.results[a].adjusted_draws,
                truth,
            })
            .collect();
        summary.push(summarize(&adjust_label(alpha), &adjusted, &parameters)?);
    }
    let exact: Vec<_> = replicates
        .iter()
        .filter_map(|r| r.true_draws.as_ref())
        .map(|draws| ReplicateDraws { draws, truth })
        .collect();
    if exact.len() == replicates.len() {
        summary.push(summarize("true", &exact, &parameters)?);
    }

    let pairs: Vec<_> = replicates
        .iter()
        .flat_map(|r| r.results[0].diagnostics.iter().cloned())
        .collect();
    let coverage = coverage_curve(&pairs, &cfg.grid, &parameters)?;
    Ok(ExperimentOutcome {
        parameters,
        replicates,
        summary,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ConjugateGaussianModel;

    fn small(workers: Option<usize>) -> ExperimentConfig {
        ExperimentConfig {
            calibration: CalibrationConfig {
                m: 15,
                n: 20,
                ..Default::default()
            },
            alphas: vec![0.0, 1.0],
            replicates: 4,
            seed: 3,
            workers,
            ..ExperimentConfig::new(vec![1.0])
        }
    }

    #[test]
    fn rows_follow_the_table_layout() {
        let out = run_experiment(&ConjugateGaussianModel::default(), &small(None), &StabilizerSpec::Unit).unwrap();
        let labels: Vec<&str> = out.summary.iter().map(|s| s.method.as_str()).collect();
        assert_eq!(labels, ["approx", "adjust(0)", "adjust(1)", "true"]);
        assert_eq!(out.coverage.m_count, 4 * 15);
        assert_eq!(out.replicates.len(), 4);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let model = ConjugateGaussianModel::default();
        let a = run_experiment(&model, &small(Some(1)), &StabilizerSpec::Unit).unwrap();
        let b = run_experiment(&model, &small(Some(3)), &StabilizerSpec::Unit).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.coverage, b.coverage);
    }

    #[test]
    fn rejects_bad_truth() {
        let cfg = ExperimentConfig::new(vec![1.0, 2.0]);
        assert!(run_experiment(&ConjugateGaussianModel::default(), &cfg, &StabilizerSpec::Unit).is_err());
    }
}
