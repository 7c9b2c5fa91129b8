//! End-to-end calibration: importance sampling of calibration parameters,
//! dataset simulation, approximate-posterior sampling, weighting, transform
//! fitting and adjustment of the observed-data posterior.
//!
//! Everything between the importance draw and the optimizer happens in
//! unconstrained coordinates. Reported draws are mapped back through the
//! model's bijection stack.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{invalid, CalError, Result};
use crate::models::Model;
use crate::optimizer::{maximize, OptimizerConfig, OptimizerReport};
use crate::rng::{self, tag};
use crate::score::ScoreConfig;
use crate::stats::LN_2PI;
use crate::transform::{MomentTransform, PenaltyConfig, TransformMode};
use crate::weights::{clip, raw_weights, unit_weights, StabilizerSpec, WeightVector};

/// One simulated calibration problem. `theta`, `draws` and `center` are in
/// unconstrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationEntry<D> {
    pub theta: Vec<f64>,
    pub data: D,
    pub draws: DrawMatrix,
    /// Mean of `draws`, the centering point of the transform.
    pub center: Vec<f64>,
}

impl<D> CalibrationEntry<D> {
    pub fn new(theta: Vec<f64>, data: D, draws: DrawMatrix) -> Self {
        let center = draws.mean();
        Self {
            theta,
            data,
            draws,
            center,
        }
    }
}

/// Calibration entries sharing one dimension and draw count.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet<D> {
    entries: Vec<CalibrationEntry<D>>,
    importance_resampled: bool,
}

impl<D> CalibrationSet<D> {
    pub fn new(entries: Vec<CalibrationEntry<D>>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| invalid("calibration set", "empty"))?;
        let (d, n) = (first.draws.dim(), first.draws.n_draws());
        for e in &entries {
            if e.draws.dim() != d || e.theta.len() != d || e.center.len() != d {
                return Err(CalError::DimensionMismatch {
                    expected: d,
                    got: e.draws.dim(),
                });
            }
            if e.draws.n_draws() != n {
                return Err(CalError::DimensionMismatch {
                    expected: n,
                    got: e.draws.n_draws(),
                });
            }
        }
        Ok(Self {
            entries,
            importance_resampled: false,
        })
    }

    pub fn entries(&self) -> &[CalibrationEntry<D>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].draws.dim()
    }

    pub fn n_draws(&self) -> usize {
        self.entries[0].draws.n_draws()
    }

    /// True when the calibration parameters were drawn with replacement.
    pub fn importance_resampled(&self) -> bool {
        self.importance_resampled
    }

    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.theta.clone()).collect()
    }

    /// Per-coordinate posterior standard deviation averaged over entries.
    pub fn mean_posterior_sd(&self) -> Vec<f64> {
        let d = self.dim();
        let mut acc = vec![0.0; d];
        for e in &self.entries {
            let n = e.draws.n_draws() as f64;
            for (j, a) in acc.iter_mut().enumerate() {
                let ss: f64 = e.draws.rows().map(|r| (r[j] - e.center[j]).powi(2)).sum();
                *a += (ss / (n - 1.0)).sqrt();
            }
        }
        acc.iter().map(|a| a / self.len() as f64).collect()
    }

    /// Restriction to the coordinates in `active`, without the datasets.
    pub fn project(&self, active: &[usize]) -> Result<CalibrationSet<()>> {
        let d = self.dim();
        if active.is_empty() || active.iter().any(|&a| a >= d) {
            return Err(invalid("subset", "coordinates must be nonempty and in range"));
        }
        let entries = self
            .entries
            .iter()
            .map(|e| {
                Ok(CalibrationEntry {
                    theta: active.iter().map(|&a| e.theta[a]).collect(),
                    data: (),
                    draws: e.draws.select_columns(active)?,
                    center: active.iter().map(|&a| e.center[a]).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CalibrationSet::new(entries)
    }
}

/// Scale-inflated approximate posterior `D(θ′ − μ̂) + μ̂` with `θ′` drawn
/// from `base`.
#[derive(Debug, Clone)]
pub struct ImportanceDistribution {
    base: DrawMatrix,
    center: Vec<f64>,
    inflation: Vec<f64>,
}

/// Calibration parameters drawn from an [`ImportanceDistribution`].
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceSample {
    pub thetas: Vec<Vec<f64>>,
    /// Set when more draws were requested than base rows exist.
    pub resampled: bool,
}

impl ImportanceDistribution {
    pub fn new(base: DrawMatrix, inflation: Vec<f64>) -> Result<Self> {
        if inflation.len() != base.dim() {
            return Err(CalError::DimensionMismatch {
                expected: base.dim(),
                got: inflation.len(),
            });
        }
        if inflation.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(invalid("inflation", "entries must be positive"));
        }
        if base.n_draws() == 0 {
            return Err(CalError::TooFewSamples { needed: 1, got: 0 });
        }
        let center = base.mean();
        Ok(Self {
            base,
            center,
            inflation,
        })
    }

    /// `D = c·I`.
    pub fn isotropic(base: DrawMatrix, c: f64) -> Result<Self> {
        let d = base.dim();
        Self::new(base, vec![c; d])
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn inflation(&self) -> &[f64] {
        &self.inflation
    }

    /// Distinct base rows when `count` allows it, otherwise rows drawn
    /// with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> ImportanceSample {
        let rows = self.base.n_draws();
        let resampled = count > rows;
        let picks: Vec<usize> = if resampled {
            (0..count).map(|_| rng.random_range(0..rows)).collect()
        } else {
            index::sample(rng, rows, count).into_vec()
        };
        let thetas = picks
            .into_iter()
            .map(|i| {
                self.base
                    .row(i)
                    .iter()
                    .zip(&self.center)
                    .zip(&self.inflation)
                    .map(|((x, m), c)| c * (x - m) + m)
                    .collect()
            })
            .collect();
        ImportanceSample { thetas, resampled }
    }

    /// Gaussian approximation `N(μ̂, DΣ̂D)` to the importance density, with
    /// `Σ̂` the covariance of the base draws.
    pub fn gaussian_log_density(&self) -> Result<impl Fn(&[f64]) -> f64 + Send + Sync> {
        let d = self.base.dim();
        let mut cov = self.base.covariance()?;
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] *= self.inflation[i] * self.inflation[j];
            }
        }
        let chol = Cholesky::new(cov).ok_or_else(|| invalid("importance covariance", "not positive definite"))?;
        let l: DMatrix<f64> = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let center = DVector::from_column_slice(&self.center);
        Ok(move |u: &[f64]| {
            let r = DVector::from_column_slice(u) - &center;
            let z = l.solve_lower_triangular(&r).expect("nonsingular factor");
            -0.5 * (d as f64 * LN_2PI + log_det + z.norm_squared())
        })
    }
}

/// `D(θ′ − μ̂) + μ̂` for `count` rows of `base`, with `μ̂` the mean of `base`.
pub fn sample_importance<R: Rng + ?Sized>(
    base: &DrawMatrix,
    inflation: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<ImportanceSample> {
    Ok(ImportanceDistribution::new(base.clone(), inflation.to_vec())?.sample(count, rng))
}

/// Simulates one dataset per parameter and samples its approximate posterior.
///
/// Dataset `m` uses RNG streams derived from `(seed, m)` only, so the result
/// does not depend on the thread schedule.
pub fn build_calibration_set<M: Model>(
    model: &M,
    thetas: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Result<CalibrationSet<M::Data>> {
    if n < 2 {
        return Err(CalError::TooFewSamples { needed: 2, got: n });
    }
    let bij = model.bijections();
    let d = model.dim();
    let results: Vec<Result<CalibrationEntry<M::Data>>> = thetas
        .par_iter()
        .enumerate()
        .map(|(index, theta)| {
            let run = || -> Result<CalibrationEntry<M::Data>> {
                if theta.len() != d {
                    return Err(CalError::DimensionMismatch {
                        expected: d,
                        got: theta.len(),
                    });
                }
                let constrained = bij.to_constrained(theta)?;
                let i = index as u64;
                let data = model.simulate(&constrained, &mut rng::stream(seed, &[tag::CALIBRATION, i, 0]))?;
                let draws = model.sample_approx(&data, n, &mut rng::stream(seed, &[tag::CALIBRATION, i, 1]))?;
                if draws.dim() != d || draws.n_draws() != n {
                    return Err(CalError::DimensionMismatch {
                        expected: n,
                        got: draws.n_draws(),
                    });
                }
                if !draws.is_finite() {
                    return Err(CalError::NonFinite {
                        what: "approximate-posterior draws",
                    });
                }
                Ok(CalibrationEntry::new(theta.clone(), data, draws))
            };
            run().map_err(|source| CalError::Dataset {
                index,
                theta: theta.clone(),
                source: Box::new(source),
            })
        })
        .collect();
    let entries = results.into_iter().collect::<Result<Vec<_>>>()?;
    CalibrationSet::new(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Calibration datasets.
    pub m: usize,
    /// Approximate-posterior draws per dataset.
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Importance scale inflation, `D = inflation · I`.
    pub inflation: f64,
    pub mode: TransformMode,
    /// Coordinates to correct; `None` corrects all of them.
    pub subset: Option<Vec<usize>>,
    pub penalty: f64,
    pub optimizer: OptimizerConfig,
    /// With `α = 1`, use a vector of ones instead of clipped raw weights.
    pub unit_weights_literal: bool,
    /// Thread count; `None` uses the ambient rayon pool.
    pub workers: Option<usize>,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            m: 100,
            n: 100,
            alpha: 1.0,
            beta: 1.0,
            inflation: 2.0,
            mode: TransformMode::Full,
            subset: None,
            penalty: 0.0,
            optimizer: OptimizerConfig::default(),
            unit_weights_literal: true,
            workers: None,
            seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(invalid("m", "must be at least 1"));
        }
        if self.n < 2 {
            return Err(invalid("n", "must be at least 2"));
        }
        check_alpha(self.alpha)?;
        if !(self.beta > 0.0 && self.beta < 2.0) {
            return Err(invalid("beta", format!("{} not in (0, 2)", self.beta)));
        }
        if !(self.inflation > 0.0 && self.inflation.is_finite()) {
            return Err(invalid("inflation", "must be positive"));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(invalid("penalty", "must be nonnegative"));
        }
        if let Some(s) = &self.subset {
            if s.is_empty() || s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("subset", "must be nonempty and strictly increasing"));
            }
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be at least 1"));
        }
        self.optimizer.validate()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} not in [0, 1]")))
    }
}

/// Calibration parameter and adjusted calibration draws, both constrained.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticPair {
    pub theta: Vec<f64>,
    pub draws: DrawMatrix,
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub alpha: f64,
    /// Full-dimensional transform in unconstrained coordinates.
    pub transform: MomentTransform,
    pub report: OptimizerReport,
    pub weights: WeightVector,
    /// Approximate draws for the observed data, constrained.
    pub approx_draws: DrawMatrix,
    /// Pushforward of the approximate draws, constrained.
    pub adjusted_draws: DrawMatrix,
    pub diagnostics: Vec<DiagnosticPair>,
    pub importance_resampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformDocument {
    pub b: Vec<f64>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerDocument {
    pub iterations: usize,
    pub objective: f64,
    pub improved: bool,
    pub converged: bool,
    pub identity_objective: f64,
}

/// JSON form of a [`CalibrationResult`], pointing at its CSV artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub alpha: f64,
    pub transform: TransformDocument,
    pub optimizer: OptimizerDocument,
    pub effective_sample_size: f64,
    pub importance_resampled: bool,
    pub diagnostics_inputs: String,
    pub adjusted_draws: String,
}

impl CalibrationResult {
    pub fn document(&self, diagnostics_inputs: &str, adjusted_draws: &str) -> ResultDocument {
        ResultDocument {
            alpha: self.alpha,
            transform: TransformDocument {
                b: self.transform.shift().to_vec(),
                l: self.transform.scale_rows(),
            },
            optimizer: OptimizerDocument {
                iterations: self.report.iterations,
                objective: self.report.objective,
                improved: self.report.improved,
                converged: self.report.converged,
                identity_objective: self.report.identity_objective,
            },
            effective_sample_size: self.weights.effective_sample_size(),
            importance_resampled: self.importance_resampled,
            diagnostics_inputs: diagnostics_inputs.to_owned(),
            adjusted_draws: adjusted_draws.to_owned(),
        }
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or inline.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| invalid("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Algorithm steps shared by every `α`: observed approximate draws,
/// calibration set and raw log weights.
struct Prepared<D> {
    observed_draws: DrawMatrix,
    set: CalibrationSet<D>,
    raw: Option<WeightVector>,
}

fn prepare<M: Model>(
    model: &M,
    observed: &M::Data,
    cfg: &CalibrationConfig,
    stabilizer: &StabilizerSpec<M::Data>,
    need_raw: bool,
) -> Result<Prepared<M::Data>> {
    let seed = cfg.seed;
    let observed_draws = model.sample_approx(observed, cfg.n, &mut rng::stream(seed, &[tag::OBSERVED]))?;
    if observed_draws.n_draws() != cfg.n || !observed_draws.is_finite() {
        return Err(CalError::Sampler("invalid approximate draws for observed data".into()));
    }
    let imp = ImportanceDistribution::isotropic(observed_draws.clone(), cfg.inflation)?;
    let sample = imp.sample(cfg.m, &mut rng::stream(seed, &[tag::IMPORTANCE]));
    if sample.resampled {
        warn!(
            "importance draws resampled with replacement: {} requested from {} base draws",
            cfg.m, cfg.n
        );
    }
    let mut set = build_calibration_set(model, &sample.thetas, cfg.n, seed)?;
    set.importance_resampled = sample.resampled;

    let raw = if need_raw {
        let log_imp = imp.gaussian_log_density()?;
        // shift by the largest log ratio so exponentiation cannot overflow
        let log_ratio: Vec<f64> = set
            .entries()
            .iter()
            .map(|e| model.log_prior(&e.theta) - log_imp(&e.theta))
            .collect();
        let shift = log_ratio
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let prior_ratio = raw_weights(
            |t| model.log_prior(t) - shift,
            |t| log_imp(t),
            &StabilizerSpec::Unit,
            &set.thetas(),
            &vec![(); set.len()],
        )?;
        let values: Vec<f64> = prior_ratio
            .as_slice()
            .iter()
            .zip(set.entries())
            .enumerate()
            .map(|(index, (w, e))| {
                let v = stabilizer.evaluate(&e.data);
                if v.is_finite() && v >= 0.0 {
                    Ok(w * v)
                } else {
                    Err(invalid("stabilizer", format!("returned {v} for calibration index {index}")))
                }
            })
            .collect::<Result<_>>()?;
        Some(WeightVector::new(values)?)
    } else {
        None
    };
    Ok(Prepared {
        observed_draws,
        set,
        raw,
    })
}

fn fit_alpha<M: Model>(
    model: &M,
    prep: &Prepared<M::Data>,
    cfg: &CalibrationConfig,
    alpha: f64,
) -> Result<CalibrationResult> {
    let set = &prep.set;
    let weights = match &prep.raw {
        Some(raw) if !(alpha == 1.0 && cfg.unit_weights_literal) => clip(raw, alpha)?,
        _ => unit_weights(set.len())?,
    };
    // mean-one scaling keeps the optimizer tolerance meaningful
    let total: f64 = weights.as_slice().iter().sum();
    let scaled = WeightVector::new(
        weights
            .as_slice()
            .iter()
            .map(|w| w * set.len() as f64 / total)
            .collect(),
    )?;
    let score = ScoreConfig::random(cfg.beta, cfg.n, &mut rng::stream(cfg.seed, &[tag::PERMUTATION]))?;
    let penalty = PenaltyConfig::new(cfg.penalty)?;
    let d = set.dim();
    let (fitted, active) = match &cfg.subset {
        None => (
            maximize(set, &scaled, &score, &penalty, cfg.mode, &cfg.optimizer)?,
            (0..d).collect::<Vec<_>>(),
        ),
        Some(active) => (
            maximize(&set.project(active)?, &scaled, &score, &penalty, cfg.mode, &cfg.optimizer)?,
            active.clone(),
        ),
    };
    let transform = fitted.transform.embed(d, &active)?;

    let bij = model.bijections();
    let approx_draws = bij.constrain_draws(&prep.observed_draws)?;
    let adjusted_draws = bij.constrain_draws(&transform.pushforward(&prep.observed_draws)?)?;
    let diagnostics = set
        .entries()
        .iter()
        .map(|e| {
            Ok(DiagnosticPair {
                theta: bij.to_constrained(&e.theta)?,
                draws: bij.constrain_draws(&transform.pushforward_centered(&e.draws, &e.center)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationResult {
        alpha,
        transform,
        report: fitted.report,
        weights,
        approx_draws,
        adjusted_draws,
        diagnostics,
        importance_resampled: set.importance_resampled(),
    })
}

/// Calibrates once per entry of `alphas`, sharing the simulated calibration
/// set between them.
pub fn calibrate_alphas<M: Model>(
    model: &M,
    observed: &M::Data,
    cfg: &CalibrationConfig,
    alphas: &[f64],
    stabilizer: &StabilizerSpec<M::Data>,
) -> Result<Vec<CalibrationResult>> {
    cfg.validate()?;
    if alphas.is_empty() {
        return Err(invalid("alpha", "at least one value required"));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    if let Some(s) = &cfg.subset {
        if s.iter().any(|&i| i >= model.dim()) {
            return Err(invalid("subset", "coordinate out of range"));
        }
    }
    let need_raw = alphas.iter().any(|&a| !(a == 1.0 && cfg.unit_weights_literal));
    with_workers(cfg.workers, || {
        let prep = prepare(model, observed, cfg, stabilizer, need_raw)?;
        alphas
            .iter()
            .map(|&a| fit_alpha(model, &prep, cfg, a))
            .collect()
    })?
}

/// Full calibration at `cfg.alpha`.
pub fn calibrate<M: Model>(
    model: &M,
    observed: &M::Data,
    cfg: &CalibrationConfig,
    stabilizer: &StabilizerSpec<M::Data>,
) -> Result<CalibrationResult> {
    let mut out = calibrate_alphas(model, observed, cfg, &[cfg.alpha], stabilizer)?;
    Ok(out.remove(0))
}
