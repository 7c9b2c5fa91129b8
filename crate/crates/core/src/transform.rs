//! Relative moment-correcting transform `f(θ) = L(θ − μ̂) + μ̂ + b`.
//!
//! One shift `b` and one lower-triangular scale `L` (positive diagonal) are
//! shared by every dataset; `μ̂` is the mean of the approximate draws being
//! transformed. The pushforward of a draw set therefore has mean `μ̂ + b` and
//! covariance `L Σ̂ Lᵀ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{invalid, CalError, Result};

/// Which entries of `L` are free during optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransformMode {
    /// Full lower triangle.
    #[default]
    Full,
    /// Diagonal only; each coordinate is corrected independently.
    Diagonal,
}

impl TransformMode {
    pub fn n_params(self, dim: usize) -> usize {
        match self {
            TransformMode::Full => dim + dim * (dim + 1) / 2,
            TransformMode::Diagonal => 2 * dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTransform {
    b: Vec<f64>,
    /// Row-major `d × d`; entries above the diagonal are zero.
    l: Vec<f64>,
}

impl MomentTransform {
    pub fn identity(dim: usize) -> Self {
        let mut l = vec![0.0; dim * dim];
        for i in 0..dim {
            l[i * dim + i] = 1.0;
        }
        Self {
            b: vec![0.0; dim],
            l,
        }
    }

    /// Builds a transform from a shift and a row-major square scale matrix.
    pub fn new(b: Vec<f64>, l: Vec<Vec<f64>>) -> Result<Self> {
        let d = b.len();
        if l.len() != d {
            return Err(CalError::DimensionMismatch {
                expected: d,
                got: l.len(),
            });
        }
        let mut flat = Vec::with_capacity(d * d);
        for (i, row) in l.iter().enumerate() {
            if row.len() != d {
                return Err(CalError::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if j > i && v != 0.0 {
                    return Err(invalid("L", "must be lower triangular"));
                }
                if j == i && !(v > 0.0) {
                    return Err(invalid("L", "diagonal must be strictly positive"));
                }
                if !v.is_finite() {
                    return Err(CalError::NonFinite { what: "L" });
                }
            }
            flat.extend_from_slice(row);
        }
        if !b.iter().all(|x| x.is_finite()) {
            return Err(CalError::NonFinite { what: "b" });
        }
        Ok(Self { b, l: flat })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn shift(&self) -> &[f64] {
        &self.b
    }

    pub fn scale(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.dim() + j]
    }

    pub fn scale_rows(&self) -> Vec<Vec<f64>> {
        self.l.chunks(self.dim()).map(<[f64]>::to_vec).collect()
    }

    pub fn scale_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.l)
    }

    /// Writes `L(θ − μ̂) + μ̂ + b` into `out` without checks.
    #[inline]
    pub(crate) fn apply_into(&self, mu_hat: &[f64], theta: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let row = &self.l[i * d..i * d + i + 1];
            let lin: f64 = row
                .iter()
                .zip(theta.iter().zip(mu_hat))
                .map(|(l, (t, m))| l * (t - m))
                .sum();
            out[i] = lin + mu_hat[i] + self.b[i];
        }
    }

    pub fn apply(&self, mu_hat: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        for len in [mu_hat.len(), theta.len()] {
            if len != self.dim() {
                return Err(CalError::DimensionMismatch {
                    expected: self.dim(),
                    got: len,
                });
            }
        }
        let mut out = vec![0.0; self.dim()];
        self.apply_into(mu_hat, theta, &mut out);
        Ok(out)
    }

    /// Inverse of [`apply`](Self::apply) by forward substitution.
    pub fn invert(&self, mu_hat: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if mu_hat.len() != d || z.len() != d {
            return Err(CalError::DimensionMismatch {
                expected: d,
                got: z.len().min(mu_hat.len()),
            });
        }
        let mut x = vec![0.0; d];
        for i in 0..d {
            let rhs = z[i] - mu_hat[i] - self.b[i];
            let acc: f64 = (0..i).map(|j| self.l[i * d + j] * x[j]).sum();
            x[i] = (rhs - acc) / self.l[i * d + i];
        }
        Ok(x.iter().zip(mu_hat).map(|(x, m)| x + m).collect())
    }

    /// Pushes every row through the transform, centering on the draws' own mean.
    pub fn pushforward(&self, draws: &DrawMatrix) -> Result<DrawMatrix> {
        if draws.n_draws() < 2 {
            return Err(CalError::TooFewSamples {
                needed: 2,
                got: draws.n_draws(),
            });
        }
        let mu_hat = draws.mean();
        self.pushforward_centered(draws, &mu_hat)
    }

    /// Pushforward with a precomputed center.
    pub fn pushforward_centered(&self, draws: &DrawMatrix, mu_hat: &[f64]) -> Result<DrawMatrix> {
        if draws.dim() != self.dim() || mu_hat.len() != self.dim() {
            return Err(CalError::DimensionMismatch {
                expected: self.dim(),
                got: draws.dim(),
            });
        }
        Ok(draws.map_rows(|src, dst| self.apply_into(mu_hat, src, dst)))
    }

    /// Lifts a transform over coordinates `active` into `full_dim`, leaving
    /// every other coordinate untouched.
    pub fn embed(&self, full_dim: usize, active: &[usize]) -> Result<Self> {
        if active.len() != self.dim() {
            return Err(CalError::DimensionMismatch {
                expected: self.dim(),
                got: active.len(),
            });
        }
        if active.iter().any(|&a| a >= full_dim) {
            return Err(invalid("subset", "coordinate out of range"));
        }
        let mut out = Self::identity(full_dim);
        for (i, &ai) in active.iter().enumerate() {
            out.b[ai] = self.b[i];
            for (j, &aj) in active.iter().enumerate() {
                out.l[ai * full_dim + aj] = self.scale(i, j);
            }
        }
        // reordered subsets could place entries above the diagonal
        for i in 0..full_dim {
            for j in (i + 1)..full_dim {
                if out.l[i * full_dim + j] != 0.0 {
                    return Err(invalid("subset", "coordinates must be increasing"));
                }
            }
        }
        Ok(out)
    }
}

/// Unconstrained optimizer coordinates for a [`MomentTransform`].
///
/// Layout: the `d` shift entries, then the free entries of `L` row by row
/// (`L[0][0], L[1][0], L[1][1], ...` in full mode, the diagonal only in
/// diagonal mode). Diagonal entries are stored as logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    dim: usize,
    mode: TransformMode,
    values: Vec<f64>,
}

impl TransformParams {
    pub fn from_vec(dim: usize, mode: TransformMode, values: Vec<f64>) -> Result<Self> {
        if values.len() != mode.n_params(dim) {
            return Err(CalError::DimensionMismatch {
                expected: mode.n_params(dim),
                got: values.len(),
            });
        }
        Ok(Self { dim, mode, values })
    }

    pub fn identity(dim: usize, mode: TransformMode) -> Self {
        Self {
            dim,
            mode,
            values: vec![0.0; mode.n_params(dim)],
        }
    }

    pub fn pack(t: &MomentTransform, mode: TransformMode) -> Result<Self> {
        let d = t.dim();
        let mut values = t.b.clone();
        for i in 0..d {
            match mode {
                TransformMode::Full => {
                    for j in 0..i {
                        values.push(t.scale(i, j));
                    }
                    values.push(t.scale(i, i).ln());
                }
                TransformMode::Diagonal => {
                    if (0..i).any(|j| t.scale(i, j) != 0.0) {
                        return Err(invalid("L", "off-diagonal entries in diagonal mode"));
                    }
                    values.push(t.scale(i, i).ln());
                }
            }
        }
        Ok(Self {
            dim: d,
            mode,
            values,
        })
    }

    pub fn unpack(&self) -> MomentTransform {
        let d = self.dim;
        let mut t = MomentTransform::identity(d);
        t.b.copy_from_slice(&self.values[..d]);
        let mut k = d;
        for i in 0..d {
            if self.mode == TransformMode::Full {
                for j in 0..i {
                    t.l[i * d + j] = self.values[k];
                    k += 1;
                }
            }
            t.l[i * d + i] = self.values[k].exp();
            k += 1;
        }
        t
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> TransformMode {
        self.mode
    }
}

/// Shrinkage of `L` toward the identity with rate `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PenaltyConfig {
    lambda: f64,
}

impl PenaltyConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda >= 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            Err(invalid("lambda", format!("{lambda} must be finite and >= 0")))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `λ (Σ_i (L_ii − 1)² + Σ_{i>j} L_ij²)`.
pub fn penalty(params: &TransformParams, cfg: &PenaltyConfig) -> f64 {
    if cfg.lambda == 0.0 {
        return 0.0;
    }
    let t = params.unpack();
    let d = t.dim();
    let mut acc = 0.0;
    for i in 0..d {
        acc += (t.scale(i, i) - 1.0).powi(2);
        for j in 0..i {
            acc += t.scale(i, j).powi(2);
        }
    }
    cfg.lambda * acc
}
