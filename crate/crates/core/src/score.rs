//! Energy score estimators.
//!
//! For a distribution `U` represented by draws `u_1..u_N` and an outcome
//! `theta`, the energy score is `½ E‖u − u'‖^β − E‖u − θ‖^β` (higher is
//! better). [`energy_score_perm`] is the cheap estimator used inside the
//! optimizer: it pairs each draw with one partner given by a fixed index
//! permutation. [`energy_score_oracle`] evaluates the full double sum and is
//! used to check it.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{invalid, CalError, Result};

/// Exponent and pairing permutation for [`energy_score_perm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    beta: f64,
    /// Zero-based partner index for every draw.
    permutation: Vec<usize>,
}

impl ScoreConfig {
    pub fn new(beta: f64, permutation: Vec<usize>) -> Result<Self> {
        check_beta(beta)?;
        let mut seen = vec![false; permutation.len()];
        for &k in &permutation {
            if k >= seen.len() || seen[k] {
                return Err(invalid("permutation", "not a bijection on 0..N"));
            }
            seen[k] = true;
        }
        Ok(Self { beta, permutation })
    }

    /// Uniform draw over all `n!` permutations; fixed points are allowed.
    pub fn random<R: Rng + ?Sized>(beta: f64, n: usize, rng: &mut R) -> Result<Self> {
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(rng);
        Self::new(beta, permutation)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 2.0 {
        Ok(())
    } else {
        Err(invalid("beta", format!("{beta} not in (0, 2)")))
    }
}

fn check_inputs(samples: &DrawMatrix, theta: &[f64]) -> Result<()> {
    if samples.n_draws() < 2 {
        return Err(CalError::TooFewSamples {
            needed: 2,
            got: samples.n_draws(),
        });
    }
    if theta.len() != samples.dim() {
        return Err(CalError::DimensionMismatch {
            expected: samples.dim(),
            got: theta.len(),
        });
    }
    if !samples.is_finite() {
        return Err(CalError::NonFinite { what: "samples" });
    }
    if !theta.iter().all(|x| x.is_finite()) {
        return Err(CalError::NonFinite { what: "theta" });
    }
    Ok(())
}

#[inline]
pub(crate) fn dist_pow(a: &[f64], b: &[f64], beta: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    if beta == 1.0 {
        sq.sqrt()
    } else {
        sq.powf(0.5 * beta)
    }
}

/// Permutation-paired Monte Carlo energy score:
/// `(1/N) Σ_i (½‖u_i − u_{k_i}‖^β − ‖u_i − θ‖^β)`.
pub fn energy_score_perm(samples: &DrawMatrix, theta: &[f64], cfg: &ScoreConfig) -> Result<f64> {
    check_inputs(samples, theta)?;
    if cfg.permutation.len() != samples.n_draws() {
        return Err(CalError::DimensionMismatch {
            expected: samples.n_draws(),
            got: cfg.permutation.len(),
        });
    }
    Ok(energy_score_perm_unchecked(samples, theta, cfg))
}

pub(crate) fn energy_score_perm_unchecked(
    samples: &DrawMatrix,
    theta: &[f64],
    cfg: &ScoreConfig,
) -> f64 {
    let beta = cfg.beta;
    let total: f64 = samples
        .rows()
        .zip(&cfg.permutation)
        .map(|(u, &k)| 0.5 * dist_pow(u, samples.row(k), beta) - dist_pow(u, theta, beta))
        .sum();
    total / samples.n_draws() as f64
}

/// Full double-sum estimator `½ (1/N²) Σ_i Σ_j ‖u_i − u_j‖^β − (1/N) Σ_i ‖u_i − θ‖^β`.
///
/// This is exactly the average of [`energy_score_perm`] over all `N!`
/// permutations.
pub fn energy_score_oracle(samples: &DrawMatrix, theta: &[f64], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    check_inputs(samples, theta)?;
    let n = samples.n_draws() as f64;
    let (pairs, obs) = pair_and_outcome_sums(samples, theta, beta);
    Ok(0.5 * pairs / (n * n) - obs / n)
}

/// Off-diagonal (U-statistic) variant: the pair term averages over `i ≠ j` only.
pub fn energy_score_unbiased(samples: &DrawMatrix, theta: &[f64], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    check_inputs(samples, theta)?;
    let n = samples.n_draws() as f64;
    let (pairs, obs) = pair_and_outcome_sums(samples, theta, beta);
    Ok(0.5 * pairs / (n * (n - 1.0)) - obs / n)
}

fn pair_and_outcome_sums(samples: &DrawMatrix, theta: &[f64], beta: f64) -> (f64, f64) {
    let mut pairs = 0.0;
    for i in 0..samples.n_draws() {
        for j in (i + 1)..samples.n_draws() {
            pairs += 2.0 * dist_pow(samples.row(i), samples.row(j), beta);
        }
    }
    let obs = samples.rows().map(|u| dist_pow(u, theta, beta)).sum();
    (pairs, obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> DrawMatrix {
        DrawMatrix::from_column(v)
    }

    #[test]
    fn point_mass_at_theta_scores_zero() {
        let s = DrawMatrix::from_rows(&[[1.0, -2.0]; 4]).unwrap();
        for beta in [0.5, 1.0, 1.7] {
            let cfg = ScoreConfig::new(beta, vec![3, 2, 1, 0]).unwrap();
            assert_eq!(energy_score_perm(&s, &[1.0, -2.0], &cfg).unwrap(), 0.0);
            assert_eq!(energy_score_oracle(&s, &[1.0, -2.0], beta).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_point_example() {
        let s = col(&[0.0, 2.0]);
        let cfg = ScoreConfig::new(1.0, vec![1, 0]).unwrap();
        assert_eq!(energy_score_perm(&s, &[1.0], &cfg).unwrap(), 0.0);
        assert_eq!(energy_score_oracle(&s, &[1.0], 1.0).unwrap(), -0.5);
    }

    #[test]
    fn point_mass_at_zero_gives_minus_distance() {
        let s = col(&[0.0, 0.0, 0.0]);
        let cfg = ScoreConfig::new(1.0, vec![2, 0, 1]).unwrap();
        for c in [-3.5, 0.25, 7.0] {
            assert_eq!(energy_score_perm(&s, &[c], &cfg).unwrap(), -f64::abs(c));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = ScoreConfig::new(1.0, vec![0]).unwrap();
        assert!(matches!(
            energy_score_perm(&col(&[1.0]), &[0.0], &cfg),
            Err(CalError::TooFewSamples { .. })
        ));
        let cfg2 = ScoreConfig::new(1.0, vec![1, 0]).unwrap();
        assert!(matches!(
            energy_score_perm(&col(&[1.0, f64::NAN]), &[0.0], &cfg2),
            Err(CalError::NonFinite { .. })
        ));
        assert!(energy_score_perm(&col(&[1.0, 2.0]), &[f64::INFINITY], &cfg2).is_err());
        assert!(energy_score_perm(&col(&[1.0, 2.0, 3.0]), &[0.0], &cfg2).is_err());
        assert!(ScoreConfig::new(2.0, vec![0, 1]).is_err());
        assert!(ScoreConfig::new(0.0, vec![0, 1]).is_err());
        assert!(ScoreConfig::new(1.0, vec![0, 0]).is_err());
        assert!(ScoreConfig::new(1.0, vec![0, 2]).is_err());
    }

    #[test]
    fn unbiased_differs_from_oracle_by_diagonal_factor() {
        let s = col(&[0.0, 1.0, 3.0, 7.0]);
        let n = 4.0;
        let v = energy_score_oracle(&s, &[2.0], 1.0).unwrap();
        let u = energy_score_unbiased(&s, &[2.0], 1.0).unwrap();
        let obs = (2.0 + 1.0 + 1.0 + 5.0) / n;
        assert!(((v + obs) - (u + obs) * (n - 1.0) / n).abs() < 1e-14);
    }

    #[test]
    fn random_permutation_is_valid() {
        let mut r = rng::stream(3, &[1]);
        let cfg = ScoreConfig::random(1.0, 50, &mut r).unwrap();
        let mut p = cfg.permutation().to_vec();
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    fn matrix_strategy() -> impl Strategy<Value = (DrawMatrix, Vec<f64>)> {
        (2usize..8, 1usize..4).prop_flat_map(|(n, d)| {
            (
                prop::collection::vec(-5.0..5.0f64, n * d),
                prop::collection::vec(-5.0..5.0f64, d),
            )
                .prop_map(move |(data, theta)| (DrawMatrix::new(n, d, data).unwrap(), theta))
        })
    }

    proptest! {
        #[test]
        fn translation_equivariance((s, theta) in matrix_strategy(), shift in -10.0..10.0f64, beta in 0.2..1.9f64) {
            let n = s.n_draws();
            let cfg = ScoreConfig::new(beta, (0..n).rev().collect()).unwrap();
            let moved = s.map_rows(|r, o| o.iter_mut().zip(r).for_each(|(o, x)| *o = x + shift));
            let t2: Vec<f64> = theta.iter().map(|x| x + shift).collect();
            let a = energy_score_perm(&s, &theta, &cfg).unwrap();
            let b = energy_score_perm(&moved, &t2, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            let a = energy_score_oracle(&s, &theta, beta).unwrap();
            let b = energy_score_oracle(&moved, &t2, beta).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn rotation_invariance_2d(data in prop::collection::vec(-5.0..5.0f64, 12), theta in prop::collection::vec(-5.0..5.0f64, 2), angle in 0.0..6.3f64) {
            let s = DrawMatrix::new(6, 2, data).unwrap();
            let (sn, cs) = angle.sin_cos();
            let rot = |v: &[f64], o: &mut [f64]| {
                o[0] = cs * v[0] - sn * v[1];
                o[1] = sn * v[0] + cs * v[1];
            };
            let rs = s.map_rows(rot);
            let mut rt = [0.0; 2];
            rot(&theta, &mut rt);
            let cfg = ScoreConfig::new(1.0, vec![2, 0, 1, 5, 3, 4]).unwrap();
            let a = energy_score_perm(&s, &theta, &cfg).unwrap();
            let b = energy_score_perm(&rs, &rt, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
            let a = energy_score_oracle(&s, &theta, 1.3).unwrap();
            let b = energy_score_oracle(&rs, &rt, 1.3).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
