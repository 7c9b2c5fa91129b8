//! Bayesian score calibration.
//!
//! Learns an affine moment-correcting transform of approximate-posterior
//! draws by maximizing an importance-weighted energy score over simulated
//! calibration datasets, then applies it to the posterior for the observed
//! data. Coverage diagnostics on the calibration datasets indicate whether
//! the adjusted posterior is trustworthy.

pub mod artifacts;
pub mod bijection;
pub mod diagnostics;
pub mod draws;
pub mod error;
pub mod experiment;
pub mod models;
pub mod optimizer;
pub mod pipeline;
pub mod rng;
pub mod score;
pub mod stats;
pub mod transform;
pub mod weights;

pub use bijection::{Bijection, BijectionStack};
pub use draws::DrawMatrix;
pub use error::{CalError, Result};
pub use models::Model;
pub use pipeline::{calibrate, CalibrationConfig, CalibrationResult};
pub use score::ScoreConfig;
pub use transform::{MomentTransform, TransformMode};
pub use weights::{StabilizerSpec, WeightVector};

/// Library version, echoed in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
