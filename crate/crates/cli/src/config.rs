//! Run configuration: TOML file, command-line overrides and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use scorecal::experiment::ExperimentConfig;
use scorecal::models::{BivariateOUModel, ConjugateGaussianModel, UnivariateOUModel};
use scorecal::{CalibrationConfig, TransformMode};

use crate::error::{from_library, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Gaussian,
    Ou1d,
    Ou2d,
    Custom,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Gaussian => "gaussian",
            ModelName::Ou1d => "ou1d",
            ModelName::Ou2d => "ou2d",
            ModelName::Custom => "custom",
        }
    }

    fn default_truth(self) -> Vec<f64> {
        match self {
            ModelName::Gaussian => vec![1.0],
            ModelName::Ou1d => vec![1.0, 10.0],
            ModelName::Ou2d => vec![1.0, 10.0, 0.5],
            ModelName::Custom => Vec::new(),
        }
    }

    fn default_mode(self) -> TransformMode {
        match self {
            ModelName::Ou1d => TransformMode::Diagonal,
            _ => TransformMode::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelName,
    pub m: usize,
    pub n: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub inflate: f64,
    pub replicates: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub out: PathBuf,
    /// Defaults to `diagonal` for `ou1d` and `full` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<TransformMode>,
    pub penalty: f64,
    /// Data-generating parameter, constrained. Defaults per model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    /// Replace the approximate posterior with the exact one.
    pub well_specified: bool,
    pub gaussian: ConjugateGaussianModel,
    pub ou1d: UnivariateOUModel,
    pub ou2d: BivariateOUModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelName::Gaussian,
            m: 100,
            n: 100,
            alpha: vec![1.0],
            beta: 1.0,
            inflate: 2.0,
            replicates: 100,
            seed: 0,
            workers: None,
            out: PathBuf::from("results"),
            mode: None,
            penalty: 0.0,
            truth: None,
            well_specified: false,
            gaussian: ConjugateGaussianModel::default(),
            ou1d: UnivariateOUModel::default(),
            ou2d: BivariateOUModel::default(),
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(a) => vec![a],
        OneOrMany::Many(a) => a,
    })
}

/// Command-line values; each one present replaces the file value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Benchmark model.
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Calibration datasets per replicate.
    #[arg(long)]
    pub m: Option<usize>,
    /// Approximate-posterior draws per dataset.
    #[arg(long)]
    pub n: Option<usize>,
    /// Clipping levels, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub alpha: Option<Vec<f64>>,
    /// Energy score exponent.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Importance scale inflation factor.
    #[arg(long)]
    pub inflate: Option<f64>,
    /// Independent observed datasets.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_owned();
            let field = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("unknown field") || message.starts_with("missing field"))
                .unwrap_or("config")
                .to_owned();
            CliError::config(field, e.to_string().trim_end())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// File values (if any) with flag overrides applied.
    pub fn resolve(flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        cfg.apply(flags);
        Ok(cfg)
    }

    pub fn apply(&mut self, flags: &Overrides) {
        if let Some(v) = flags.model {
            self.model = v;
        }
        if let Some(v) = flags.m {
            self.m = v;
        }
        if let Some(v) = flags.n {
            self.n = v;
        }
        if let Some(v) = &flags.alpha {
            self.alpha = v.clone();
        }
        if let Some(v) = flags.beta {
            self.beta = v;
        }
        if let Some(v) = flags.inflate {
            self.inflate = v;
        }
        if let Some(v) = flags.replicates {
            self.replicates = v;
        }
        if let Some(v) = flags.seed {
            self.seed = v;
        }
        if flags.workers.is_some() {
            self.workers = flags.workers;
        }
        if let Some(v) = &flags.out {
            self.out = v.clone();
        }
    }

    pub fn mode(&self) -> TransformMode {
        self.mode.unwrap_or(self.model.default_mode())
    }

    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone().unwrap_or_else(|| self.model.default_truth())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            calibration: CalibrationConfig {
                m: self.m,
                n: self.n,
                alpha: self.alpha.first().copied().unwrap_or(1.0),
                beta: self.beta,
                inflation: self.inflate,
                mode: self.mode(),
                penalty: self.penalty,
                ..CalibrationConfig::default()
            },
            alphas: self.alpha.clone(),
            replicates: self.replicates,
            truth: self.truth(),
            include_true: true,
            grid: scorecal::diagnostics::default_grid(),
            seed: self.seed,
            workers: self.workers,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.model == ModelName::Custom {
            return Err(CliError::config(
                "model",
                "custom models must be implemented against the library Model trait",
            ));
        }
        for (field, v) in [("m", self.m), ("n", self.n), ("replicates", self.replicates)] {
            if v < 1 {
                return Err(CliError::config(field, "must be at least 1"));
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::config("workers", "must be at least 1"));
        }
        if self.alpha.is_empty() {
            return Err(CliError::config("alpha", "at least one value required"));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(CliError::config("alpha", format!("{a} not in [0, 1]")));
        }
        let model_check = match self.model {
            ModelName::Gaussian => self.gaussian.validate().map_err(|e| (e, "gaussian")),
            ModelName::Ou1d => self.ou1d.process.validate().map_err(|e| (e, "ou1d.process")),
            ModelName::Ou2d => match self.ou2d.process.validate() {
                Ok(()) => self.ou2d.validate().map_err(|e| (e, "ou2d")),
                Err(e) => Err((e, "ou2d.process")),
            },
            ModelName::Custom => Ok(()),
        };
        model_check.map_err(|(e, section)| from_library(e, Some(section)))?;
        let dim = self.model.default_truth().len();
        self.experiment().validate(dim).map_err(|e| from_library(e, None))
    }

    /// Config echo for the run manifest. Worker count and output path are
    /// left out so that artifacts do not depend on them.
    pub fn manifest(&self, parameters: &[String]) -> serde_json::Value {
        let mut echo = serde_json::to_value(self).expect("run config serializes");
        let obj = echo.as_object_mut().expect("config is a table");
        obj.remove("workers");
        obj.remove("out");
        obj.insert("mode".into(), serde_json::to_value(self.mode()).expect("mode serializes"));
        obj.insert("truth".into(), self.truth().into());
        serde_json::json!({
            "config": echo,
            "seed": self.seed,
            "parameters": parameters,
            "versions": {
                "scorecal": scorecal::VERSION,
                "calibrate": env!("CARGO_PKG_VERSION"),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
model = "ou1d"
m = 50
n = 80
alpha = [1.0, 0.5]
beta = 1.5
inflate = 3.0
replicates = 10
seed = 7
workers = 2
out = "runs/ou"
mode = "full"
penalty = 0.1
truth = [1.0, 10.0]
well_specified = false

[gaussian]
n_obs = 20

[ou1d.process]
x0 = 8.0
n_obs = 50

[ou2d]
surrogate_fit_draws = 500
"#;

    #[test]
    fn parses_every_documented_key() {
        let cfg = RunConfig::parse(EXAMPLE).unwrap();
        assert_eq!(cfg.model, ModelName::Ou1d);
        assert_eq!((cfg.m, cfg.n, cfg.replicates, cfg.seed), (50, 80, 10, 7));
        assert_eq!(cfg.alpha, vec![1.0, 0.5]);
        assert_eq!((cfg.beta, cfg.inflate, cfg.penalty), (1.5, 3.0, 0.1));
        assert_eq!(cfg.workers, Some(2));
        assert_eq!(cfg.out, PathBuf::from("runs/ou"));
        assert_eq!(cfg.mode(), TransformMode::Full);
        assert_eq!(cfg.truth(), vec![1.0, 10.0]);
        assert_eq!(cfg.gaussian.n_obs, 20);
        assert_eq!(cfg.gaussian.sigma, 1.0);
        assert_eq!(cfg.ou1d.process.x0, 8.0);
        assert_eq!(cfg.ou1d.process.n_obs, 50);
        assert_eq!(cfg.ou1d.process.gamma, 2.0);
        assert_eq!(cfg.ou2d.surrogate_fit_draws, 500);
        assert_eq!(cfg.ou2d.process.x0, 5.0);
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::parse(EXAMPLE).unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let default = RunConfig::default();
        assert_eq!(RunConfig::parse(&default.to_toml()).unwrap(), default);
        assert_eq!(RunConfig::parse("").unwrap(), default);
    }

    #[test]
    fn scalar_alpha() {
        assert_eq!(RunConfig::parse("alpha = 0.5").unwrap().alpha, vec![0.5]);
    }

    #[test]
    fn unknown_key_names_the_field() {
        match RunConfig::parse("replicats = 3").unwrap_err() {
            CliError::Config { field, .. } => assert_eq!(field, "replicats"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = RunConfig::parse(EXAMPLE).unwrap();
        cfg.apply(&Overrides {
            m: Some(5),
            alpha: Some(vec![0.0, 1.0]),
            model: Some(ModelName::Gaussian),
            ..Overrides::default()
        });
        assert_eq!((cfg.m, cfg.n), (5, 80));
        assert_eq!(cfg.alpha, vec![0.0, 1.0]);
        assert_eq!(cfg.model, ModelName::Gaussian);
    }

    #[test]
    fn model_defaults() {
        let cfg = RunConfig {
            model: ModelName::Ou1d,
            ..RunConfig::default()
        };
        assert_eq!(cfg.mode(), TransformMode::Diagonal);
        assert_eq!(cfg.truth(), vec![1.0, 10.0]);
        assert_eq!(RunConfig::default().mode(), TransformMode::Full);
    }

    fn field_of(cfg: RunConfig) -> String {
        match cfg.validate().unwrap_err() {
            CliError::Config { field, .. } => field,
            e => panic!("{e}"),
        }
    }

    #[test]
    fn validation_fields() {
        let base = RunConfig::default();
        assert!(base.validate().is_ok());
        assert_eq!(field_of(RunConfig { model: ModelName::Custom, ..base.clone() }), "model");
        assert_eq!(field_of(RunConfig { m: 0, ..base.clone() }), "m");
        assert_eq!(field_of(RunConfig { alpha: vec![1.5], ..base.clone() }), "alpha");
        assert_eq!(field_of(RunConfig { beta: 2.0, ..base.clone() }), "beta");
        assert_eq!(field_of(RunConfig { inflate: 0.0, ..base.clone() }), "inflate");
        assert_eq!(field_of(RunConfig { workers: Some(0), ..base.clone() }), "workers");
        assert_eq!(field_of(RunConfig { truth: Some(vec![1.0, 2.0]), ..base.clone() }), "truth");
        let mut bad = base.clone();
        bad.gaussian.n_obs = 0;
        assert_eq!(field_of(bad), "gaussian.n_obs");
    }

    #[test]
    fn manifest_omits_scheduling_fields() {
        let cfg = RunConfig {
            workers: Some(4),
            ..RunConfig::default()
        };
        let m = cfg.manifest(&["mu".to_owned()]);
        assert!(m["config"].get("workers").is_none());
        assert!(m["config"].get("out").is_none());
        assert_eq!(m["config"]["mode"], "full");
        assert_eq!(m["seed"], 0);
        assert_eq!(m["versions"]["scorecal"], scorecal::VERSION);
    }
}
