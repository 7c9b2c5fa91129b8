use thiserror::Error;

/// Errors produced by the calibration library.
#[derive(Debug, Error)]
pub enum CalError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite log-density at calibration index {index}")]
    NonFiniteLogDensity { index: usize },

    #[error("calibration dataset {index} failed at theta = {theta:?}: {source}")]
    Dataset {
        index: usize,
        theta: Vec<f64>,
        #[source]
        source: Box<CalError>,
    },

    #[error("objective evaluation failed on dataset {index}: {source}")]
    Objective {
        index: usize,
        #[source]
        source: Box<CalError>,
    },

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<CalError>,
    },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CalError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> CalError {
    CalError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
