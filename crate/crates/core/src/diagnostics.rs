//! Calibration coverage `CC(ρ)` and replicate summary metrics.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{invalid, CalError, Result};
use crate::pipeline::DiagnosticPair;
use crate::stats::{correlation, mean, quantile_sorted, sorted_copy, std_dev};

/// Allowed deviation of `CC(ρ)` from `ρ` before a parameter is flagged.
pub const PARITY_BAND: f64 = 0.1;

/// `{0.05, 0.10, ..., 0.95}`.
pub fn default_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

fn check_level(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(invalid("rho", format!("{rho} not in (0, 1)")))
    }
}

fn interval_sorted(sorted: &[f64], rho: f64) -> (f64, f64) {
    let tail = (1.0 - rho) / 2.0;
    (quantile_sorted(sorted, tail), quantile_sorted(sorted, 1.0 - tail))
}

/// Equal-tailed `ρ` credible interval from empirical quantiles.
pub fn credible_interval(draws: &[f64], rho: f64) -> Result<(f64, f64)> {
    check_level(rho)?;
    if draws.len() < 2 {
        return Err(CalError::TooFewSamples {
            needed: 2,
            got: draws.len(),
        });
    }
    Ok(interval_sorted(&sorted_copy(draws), rho))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub rho: f64,
    pub cc: f64,
}

/// Marginal coverage curves, one per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub parameters: Vec<String>,
    pub grid: Vec<f64>,
    /// `cc[p][g]` is the coverage of parameter `p` at `grid[g]`.
    pub cc: Vec<Vec<f64>>,
    pub m_count: usize,
}

impl CoverageCurve {
    pub fn points(&self, p: usize) -> Vec<CoveragePoint> {
        self.grid
            .iter()
            .zip(&self.cc[p])
            .map(|(&rho, &cc)| CoveragePoint { rho, cc })
            .collect()
    }

    /// Largest `|CC(ρ) − ρ|` over the grid for parameter `p`.
    pub fn max_deviation(&self, p: usize) -> f64 {
        self.grid
            .iter()
            .zip(&self.cc[p])
            .map(|(r, c)| (c - r).abs())
            .fold(0.0, f64::max)
    }

    /// True when every grid point lies within `band` of parity.
    pub fn within_band(&self, p: usize, band: f64) -> bool {
        self.max_deviation(p) <= band
    }

    /// Columns `parameter,rho,cc,m_count`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w);
        out.write_record(["parameter", "rho", "cc", "m_count"])?;
        for (p, name) in self.parameters.iter().enumerate() {
            for (rho, cc) in self.grid.iter().zip(&self.cc[p]) {
                out.write_record([name.clone(), rho.to_string(), cc.to_string(), self.m_count.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Fraction of pairs whose marginal `ρ` interval contains the matching
/// coordinate of `θ̄`, boundaries included.
pub fn coverage_curve(pairs: &[DiagnosticPair], grid: &[f64], parameters: &[String]) -> Result<CoverageCurve> {
    let first = pairs.first().ok_or_else(|| invalid("diagnostic pairs", "empty"))?;
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("grid", "must be nonempty and strictly increasing"));
    }
    for &r in grid {
        check_level(r)?;
    }
    let d = first.theta.len();
    if parameters.len() != d {
        return Err(CalError::DimensionMismatch {
            expected: d,
            got: parameters.len(),
        });
    }
    for pair in pairs {
        if pair.theta.len() != d || pair.draws.dim() != d {
            return Err(CalError::DimensionMismatch {
                expected: d,
                got: pair.draws.dim(),
            });
        }
        if pair.draws.n_draws() < 2 {
            return Err(CalError::TooFewSamples {
                needed: 2,
                got: pair.draws.n_draws(),
            });
        }
    }
    if pairs.len() < 10 {
        warn!("coverage estimated from only {} calibration pairs", pairs.len());
    }
    let mut cc = vec![vec![0.0; grid.len()]; d];
    for pair in pairs {
        for (p, row) in cc.iter_mut().enumerate() {
            let sorted = sorted_copy(&pair.draws.column(p));
            let t = pair.theta[p];
            for (g, &rho) in grid.iter().enumerate() {
                let (lo, hi) = interval_sorted(&sorted, rho);
                if lo <= t && t <= hi {
                    row[g] += 1.0;
                }
            }
        }
    }
    let m = pairs.len() as f64;
    for row in &mut cc {
        for v in row.iter_mut() {
            *v /= m;
        }
    }
    Ok(CoverageCurve {
        parameters: parameters.to_vec(),
        grid: grid.to_vec(),
        cc,
        m_count: pairs.len(),
    })
}

/// Posterior draws for one replicate paired with the parameter that
/// generated its data.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDraws<'a> {
    pub draws: &'a DrawMatrix,
    pub truth: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterMetrics {
    pub parameter: String,
    pub mse: f64,
    pub bias: f64,
    pub sd: f64,
    pub coverage90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub first: String,
    pub second: String,
    pub correlation: f64,
}

/// Replicate-averaged metrics for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub method: String,
    pub parameters: Vec<ParameterMetrics>,
    pub correlations: Vec<PairCorrelation>,
}

impl SummaryMetrics {
    pub fn parameter(&self, name: &str) -> Option<&ParameterMetrics> {
        self.parameters.iter().find(|p| p.parameter == name)
    }

    pub fn correlation(&self, first: &str, second: &str) -> Option<f64> {
        self.correlations
            .iter()
            .find(|c| (c.first == first && c.second == second) || (c.first == second && c.second == first))
            .map(|c| c.correlation)
    }
}

/// Squared error, bias and SD of one draw vector against `truth`.
pub fn draw_errors(draws: &[f64], truth: f64) -> (f64, f64, f64) {
    let mse = draws.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / draws.len() as f64;
    (mse, mean(draws) - truth, std_dev(draws))
}

/// Averages MSE, bias, SD, 90% coverage and pairwise correlations over
/// replicates.
pub fn summarize(method: &str, runs: &[ReplicateDraws<'_>], parameters: &[String]) -> Result<SummaryMetrics> {
    if runs.is_empty() {
        return Err(invalid("runs", "empty"));
    }
    let d = parameters.len();
    for r in runs {
        if r.draws.dim() != d || r.truth.len() != d {
            return Err(CalError::DimensionMismatch {
                expected: d,
                got: r.truth.len(),
            });
        }
        if r.draws.n_draws() < 2 {
            return Err(CalError::TooFewSamples {
                needed: 2,
                got: r.draws.n_draws(),
            });
        }
    }
    let k = runs.len() as f64;
    let mut params = Vec::with_capacity(d);
    for (p, name) in parameters.iter().enumerate() {
        let (mut mse, mut bias, mut sd, mut cov) = (0.0, 0.0, 0.0, 0.0);
        for r in runs {
            let x = r.draws.column(p);
            let t = r.truth[p];
            let (m, b, s) = draw_errors(&x, t);
            mse += m;
            bias += b;
            sd += s;
            let (lo, hi) = credible_interval(&x, 0.9)?;
            if lo <= t && t <= hi {
                cov += 1.0;
            }
        }
        params.push(ParameterMetrics {
            parameter: name.clone(),
            mse: mse / k,
            bias: bias / k,
            sd: sd / k,
            coverage90: cov / k,
        });
    }
    let mut correlations = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let total: f64 = runs
                .iter()
                .map(|r| correlation(&r.draws.column(i), &r.draws.column(j)))
                .sum();
            correlations.push(PairCorrelation {
                first: parameters[i].clone(),
                second: parameters[j].clone(),
                correlation: total / k,
            });
        }
    }
    Ok(SummaryMetrics {
        method: method.to_owned(),
        parameters: params,
        correlations,
    })
}

pub const SUMMARY_HEADER: [&str; 6] = ["parameter", "method", "mse", "bias", "sd", "coverage90"];

/// Columns `parameter,method,mse,bias,sd,coverage90`, grouped by parameter.
pub fn write_summary_csv<W: Write>(rows: &[SummaryMetrics], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    let names: Vec<&str> = rows
        .first()
        .map(|r| r.parameters.iter().map(|p| p.parameter.as_str()).collect())
        .unwrap_or_default();
    for name in names {
        for row in rows {
            if let Some(p) = row.parameter(name) {
                out.write_record([
                    name.to_owned(),
                    row.method.clone(),
                    p.mse.to_string(),
                    p.bias.to_string(),
                    p.sd.to_string(),
                    p.coverage90.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Columns `first,second,method,correlation`.
pub fn write_correlation_csv<W: Write>(rows: &[SummaryMetrics], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["first", "second", "method", "correlation"])?;
    for row in rows {
        for c in &row.correlations {
            out.write_record([c.first.clone(), c.second.clone(), row.method.clone(), c.correlation.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, StandardNormal};

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn interval_examples() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        let (lo, hi) = credible_interval(&x, 0.9).unwrap();
        // type-7 positions 0.05·99 and 0.95·99
        assert!((lo - 5.95).abs() < 1e-12 && (hi - 95.05).abs() < 1e-12);
        assert_eq!(credible_interval(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), (1.75, 3.25));
        assert_eq!(credible_interval(&[2.0; 5], 0.3).unwrap(), (2.0, 2.0));
        assert!(credible_interval(&x, 1.0).is_err());
        assert!(credible_interval(&x, 0.0).is_err());
        assert!(credible_interval(&[1.0], 0.5).is_err());
    }

    fn pair(theta: f64, draws: Vec<f64>) -> DiagnosticPair {
        DiagnosticPair {
            theta: vec![theta],
            draws: DrawMatrix::from_column(&draws),
        }
    }

    #[test]
    fn coverage_extremes() {
        let draws: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let centered: Vec<_> = (0..12).map(|_| pair(10.0, draws.clone())).collect();
        let c = coverage_curve(&centered, &default_grid(), &names(1)).unwrap();
        assert!(c.cc[0].iter().all(|&v| v == 1.0));
        let outside: Vec<_> = (0..12).map(|_| pair(100.0, draws.clone())).collect();
        let c = coverage_curve(&outside, &default_grid(), &names(1)).unwrap();
        assert!(c.cc[0].iter().all(|&v| v == 0.0));
        assert!(!c.within_band(0, PARITY_BAND));
        // constant draws contain θ̄ only when equal
        let c = coverage_curve(&[pair(2.0, vec![2.0; 4]), pair(1.0, vec![2.0; 4])], &[0.5], &names(1)).unwrap();
        assert_eq!(c.cc[0], vec![0.5]);
        assert!(coverage_curve(&[], &[0.5], &names(1)).is_err());
        assert!(coverage_curve(&centered, &[0.5, 0.4], &names(1)).is_err());
    }

    #[test]
    fn null_case_sits_near_parity() {
        let mut r = rng::stream(7, &[]);
        let pairs: Vec<_> = (0..2000)
            .map(|_| {
                let theta: f64 = StandardNormal.sample(&mut r);
                let draws: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut r)).collect();
                pair(theta, draws)
            })
            .collect();
        let c = coverage_curve(&pairs, &default_grid(), &names(1)).unwrap();
        assert!(c.max_deviation(0) < 0.05, "{:?}", c.cc);
    }

    #[test]
    fn coverage_csv_layout() {
        let c = coverage_curve(&[pair(0.0, vec![-1.0, 1.0])], &[0.5], &["mu".to_owned()]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "parameter,rho,cc,m_count\nmu,0.5,1,1\n");
    }

    #[test]
    fn summary_examples() {
        let ones = DrawMatrix::from_column(&[1.0, 1.0, 1.0]);
        let s = summarize("a", &[ReplicateDraws { draws: &ones, truth: &[1.0] }], &names(1)).unwrap();
        assert_eq!((s.parameters[0].mse, s.parameters[0].bias), (0.0, 0.0));
        let two = DrawMatrix::from_column(&[0.0, 2.0]);
        let s = summarize("a", &[ReplicateDraws { draws: &two, truth: &[1.0] }], &names(1)).unwrap();
        assert_eq!((s.parameters[0].mse, s.parameters[0].bias), (1.0, 0.0));
        let line = DrawMatrix::from_rows(&[[0.0, 1.0], [1.0, 3.0], [2.0, 5.0]]).unwrap();
        let s = summarize("a", &[ReplicateDraws { draws: &line, truth: &[0.0, 0.0] }], &names(2)).unwrap();
        assert!((s.correlation("p0", "p1").unwrap() - 1.0).abs() < 1e-12);
        assert!(summarize("a", &[ReplicateDraws { draws: &line, truth: &[0.0] }], &names(2)).is_err());
    }

    #[test]
    fn summary_csv_layout() {
        let x = DrawMatrix::from_column(&[0.0, 2.0]);
        let runs = [ReplicateDraws { draws: &x, truth: &[1.0] }];
        let rows = vec![
            summarize("approx", &runs, &["mu".to_owned()]).unwrap(),
            summarize("adjust(1)", &runs, &["mu".to_owned()]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "parameter,method,mse,bias,sd,coverage90");
        assert!(lines[1].starts_with("mu,approx,1,0,"));
        assert!(lines[2].starts_with("mu,adjust(1),"));
    }

    proptest! {
        #[test]
        fn mse_decomposes_into_bias_and_spread(xs in prop::collection::vec(-5.0f64..5.0, 2..40), t in -5.0f64..5.0) {
            let (mse, bias, sd) = draw_errors(&xs, t);
            let n = xs.len() as f64;
            // population variance = sample variance · (n − 1)/n
            let var_pop = sd * sd * (n - 1.0) / n;
            prop_assert!((mse - (bias * bias + var_pop)).abs() < 1e-10);
        }

        #[test]
        fn coverage_is_monotone_and_order_free(seed in 0u64..200) {
            let mut r = rng::stream(seed, &[]);
            let mut pairs: Vec<_> = (0..15)
                .map(|_| {
                    let theta: f64 = StandardNormal.sample(&mut r);
                    let draws: Vec<f64> = (0..9).map(|_| 0.5 + Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
                    pair(theta, draws)
                })
                .collect();
            let grid = default_grid();
            let a = coverage_curve(&pairs, &grid, &names(1)).unwrap();
            for w in a.cc[0].windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            pairs.shuffle(&mut r);
            let b = coverage_curve(&pairs, &grid, &names(1)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
