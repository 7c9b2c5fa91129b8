//! Row-major sample matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CalError, Result};

/// `N` draws of a `d`-dimensional parameter, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DrawMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if data.len() != rows * dim {
            return Err(CalError::DimensionMismatch {
                expected: rows * dim,
                got: data.len(),
            });
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(CalError::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    /// Single-parameter draws.
    pub fn from_column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            dim: 1,
            data: values.to_vec(),
        }
    }

    pub fn n_draws(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn rows_mut(&mut self) -> impl Iterator<Item = &mut [f64]> + '_ {
        self.data.chunks_exact_mut(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (acc, x) in m.iter_mut().zip(r) {
                *acc += x;
            }
        }
        let n = self.rows as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Unbiased (`N - 1`) sample covariance.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.rows < 2 {
            return Err(CalError::TooFewSamples {
                needed: 2,
                got: self.rows,
            });
        }
        let mean = self.mean();
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for r in self.rows() {
            for i in 0..self.dim {
                let di = r[i] - mean[i];
                for j in 0..=i {
                    cov[(i, j)] += di * (r[j] - mean[j]);
                }
            }
        }
        let denom = (self.rows - 1) as f64;
        for i in 0..self.dim {
            for j in 0..=i {
                let v = cov[(i, j)] / denom;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok(cov)
    }

    pub fn std_devs(&self) -> Result<Vec<f64>> {
        let cov = self.covariance()?;
        Ok((0..self.dim).map(|i| cov[(i, i)].sqrt()).collect())
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.dim) {
            return Err(invalid("column", format!("{bad} out of range 0..{}", self.dim)));
        }
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in self.rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Self::new(self.rows, cols.len(), data)
    }

    /// Applies `f` to every row, producing a matrix of the same shape.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let mut out = Self::zeros(self.rows, self.dim);
        for (src, dst) in self.rows().zip(out.rows_mut()) {
            f(src, dst);
        }
        out
    }
}
