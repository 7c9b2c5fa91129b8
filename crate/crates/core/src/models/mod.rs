//! Benchmark models and the samplers they share.
//!
//! A [`Model`] bundles a prior, a simulator and an approximate-posterior
//! sampler. All parameter vectors crossing this interface are in
//! unconstrained coordinates except the simulator input, which receives the
//! constrained image.

pub mod bivariate_ou;
pub mod gaussian;
pub mod meanfield;
pub mod ou;
pub mod rwm;

use std::io::{Read, Write};

use crate::bijection::BijectionStack;
use crate::draws::DrawMatrix;
use crate::error::{CalError, Result};
use crate::rng::SimRng;

pub use bivariate_ou::BivariateOUModel;
pub use gaussian::ConjugateGaussianModel;
pub use meanfield::MeanFieldGaussian;
pub use ou::{OUModel, UnivariateOUModel};
pub use rwm::{rwm_sample, RwmConfig};

pub trait Model: Send + Sync {
    type Data: Send + Sync;

    fn param_names(&self) -> Vec<String>;

    fn dim(&self) -> usize {
        self.param_names().len()
    }

    fn bijections(&self) -> BijectionStack;

    /// Prior log-density in unconstrained coordinates, Jacobian included.
    fn log_prior(&self, u: &[f64]) -> f64;

    /// Draws a dataset given constrained parameters.
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Self::Data>;

    /// `n` approximate-posterior draws in unconstrained coordinates.
    fn sample_approx(&self, data: &Self::Data, n: usize, rng: &mut SimRng) -> Result<DrawMatrix>;

    /// `n` exact-posterior draws in unconstrained coordinates, when the
    /// model can produce them.
    fn sample_true(
        &self,
        _data: &Self::Data,
        _n: usize,
        _rng: &mut SimRng,
    ) -> Option<Result<DrawMatrix>> {
        None
    }
}

/// Uses the exact posterior as the "approximate" one. Calibrating this
/// model should leave the identity transform essentially untouched.
#[derive(Debug, Clone)]
pub struct WellSpecified<M>(pub M);

impl<M: Model> Model for WellSpecified<M> {
    type Data = M::Data;

    fn param_names(&self) -> Vec<String> {
        self.0.param_names()
    }

    fn bijections(&self) -> BijectionStack {
        self.0.bijections()
    }

    fn log_prior(&self, u: &[f64]) -> f64 {
        self.0.log_prior(u)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Self::Data> {
        self.0.simulate(theta, rng)
    }

    fn sample_approx(&self, data: &Self::Data, n: usize, rng: &mut SimRng) -> Result<DrawMatrix> {
        self.0
            .sample_true(data, n, rng)
            .unwrap_or_else(|| Err(CalError::Sampler("model has no exact posterior".into())))
    }

    fn sample_true(
        &self,
        data: &Self::Data,
        n: usize,
        rng: &mut SimRng,
    ) -> Option<Result<DrawMatrix>> {
        self.0.sample_true(data, n, rng)
    }
}

/// Tabular dataset: one row per independent realization, one column per
/// observed component.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    columns: Vec<String>,
    values: DrawMatrix,
}

impl Observations {
    pub fn new(columns: Vec<String>, values: DrawMatrix) -> Result<Self> {
        if columns.len() != values.dim() {
            return Err(CalError::DimensionMismatch {
                expected: values.dim(),
                got: columns.len(),
            });
        }
        Ok(Self { columns, values })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.values.n_draws()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &DrawMatrix {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(&self.columns)?;
        for row in self.values.rows() {
            out.write_record(row.iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut data = Vec::new();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec?;
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    crate::error::invalid("dataset", format!("cannot parse {field:?}"))
                })?;
                data.push(v);
            }
            rows += 1;
        }
        Self::new(columns.clone(), DrawMatrix::new(rows, columns.len(), data)?)
    }
}

/// Running sums of a bivariate sample, enough for Gaussian likelihoods.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub n: f64,
    pub s1: f64,
    pub s2: f64,
    pub t1: f64,
    pub t2: f64,
    pub st: f64,
}

impl Moments {
    pub fn univariate(x: &[f64]) -> Self {
        let mut m = Self {
            n: x.len() as f64,
            ..Self::default()
        };
        for &v in x {
            m.s1 += v;
            m.s2 += v * v;
        }
        m
    }

    pub fn bivariate(rows: &DrawMatrix) -> Self {
        let mut m = Self {
            n: rows.n_draws() as f64,
            ..Self::default()
        };
        for r in rows.rows() {
            m.s1 += r[0];
            m.s2 += r[0] * r[0];
            m.t1 += r[1];
            m.t2 += r[1] * r[1];
            m.st += r[0] * r[1];
        }
        m
    }

    /// `Σ (x_i − a)²` for the first component.
    pub fn centered_ss(&self, a: f64) -> f64 {
        self.s2 - 2.0 * a * self.s1 + self.n * a * a
    }

    /// `Σ (y_i − a)²` for the second component.
    pub fn centered_ss2(&self, a: f64) -> f64 {
        self.t2 - 2.0 * a * self.t1 + self.n * a * a
    }

    /// `Σ (x_i − a)(y_i − a)`.
    pub fn centered_cross(&self, a: f64) -> f64 {
        self.st - a * (self.s1 + self.t1) + self.n * a * a
    }
}
