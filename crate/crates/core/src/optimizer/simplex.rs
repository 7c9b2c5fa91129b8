//! Nelder–Mead simplex minimizer.

use crate::error::Result;

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub best_history: Vec<f64>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` from `x0` with an axis-aligned initial simplex whose edge
/// along coordinate `i` is `steps[i]`. Stops once the spread of objective
/// values across the simplex falls below `ftol`, or after `max_iter`
/// iterations. Non-finite objective values are treated as `+∞`.
pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    ftol: f64,
    max_iter: usize,
) -> Result<SimplexOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evaluations: &mut usize| -> Result<f64> {
        *evaluations += 1;
        let v = f(x)?;
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    };

    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    points.push(x0.to_vec());
    values.push(eval(x0, &mut evaluations)?);
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        values.push(eval(&p, &mut evaluations)?);
        points.push(p);
    }

    let mut order: Vec<usize> = (0..=n).collect();
    let mut best_history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];

    while iterations < max_iter {
        // stable sort keeps ties in index order, which keeps runs reproducible
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        if n == 0 || values[worst] - values[best] < ftol {
            converged = true;
            break;
        }
        iterations += 1;
        let second_worst = order[n - 1];

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &k in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&points[k]) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);

        let along = |coef: f64, out: &mut [f64], worst_pt: &[f64]| {
            for ((o, c), w) in out.iter_mut().zip(&centroid).zip(worst_pt) {
                *o = c + coef * (c - w);
            }
        };

        along(REFLECT, &mut trial, &points[worst]);
        let fr = eval(&trial, &mut evaluations)?;

        if fr < values[best] {
            let reflected = trial.clone();
            along(EXPAND, &mut trial, &points[worst]);
            let fe = eval(&trial, &mut evaluations)?;
            if fe < fr {
                points[worst].copy_from_slice(&trial);
                values[worst] = fe;
            } else {
                points[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            points[worst].copy_from_slice(&trial);
            values[worst] = fr;
        } else {
            let outside = fr < values[worst];
            let coef = if outside { CONTRACT } else { -CONTRACT };
            along(coef, &mut trial, &points[worst]);
            let fc = eval(&trial, &mut evaluations)?;
            let accept = if outside { fc <= fr } else { fc < values[worst] };
            if accept {
                points[worst].copy_from_slice(&trial);
                values[worst] = fc;
            } else {
                let anchor = points[best].clone();
                for &k in &order[1..] {
                    for (x, a) in points[k].iter_mut().zip(&anchor) {
                        *x = a + SHRINK * (*x - a);
                    }
                    values[k] = eval(&points[k], &mut evaluations)?;
                }
            }
        }
        let current_best = values.iter().copied().fold(f64::INFINITY, f64::min);
        best_history.push(current_best);
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Ok(SimplexOutcome {
        x: points[best].clone(),
        fx: values[best],
        iterations,
        evaluations,
        converged,
        best_history,
    })
}
