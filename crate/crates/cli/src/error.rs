//! CLI failures and their exit codes.

use serde_json::json;
use thiserror::Error;

use scorecal::CalError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Rejected configuration; exit code 2.
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    /// Missing or unreadable diagnostics inputs; exit code 2.
    #[error("{message}")]
    Input { message: String },

    /// Failure while running; exit code 1.
    #[error("{source}")]
    Runtime {
        replicate: Option<usize>,
        #[source]
        source: CalError,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn input(message: impl ToString) -> Self {
        CliError::Input {
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Input { .. } => 2,
            CliError::Runtime { .. } | CliError::Io(_) => 1,
        }
    }

    /// One-line JSON error record written to stderr.
    pub fn record(&self) -> serde_json::Value {
        match self {
            CliError::Config { field, message } => json!({
                "error": "config",
                "field": field,
                "message": message,
            }),
            CliError::Input { message } => json!({
                "error": "input",
                "message": message,
            }),
            CliError::Runtime { replicate, source } => json!({
                "error": "runtime",
                "replicate": replicate,
                "message": source.to_string(),
            }),
            CliError::Io(e) => json!({
                "error": "io",
                "message": e.to_string(),
            }),
        }
    }
}

/// Classifies a library error raised while validating or running. Parameter
/// errors surface as config errors; anything raised inside a replicate is a
/// runtime error carrying its index.
pub fn from_library(err: CalError, section: Option<&str>) -> CliError {
    match err {
        CalError::InvalidParameter { name, reason } => {
            let field = match (section, name) {
                (Some(s), n) => format!("{s}.{n}"),
                (None, "inflation") => "inflate".to_owned(),
                (None, n) => n.to_owned(),
            };
            CliError::config(field, reason)
        }
        CalError::DimensionMismatch { expected, got } => {
            CliError::config("truth", format!("expected {expected} values, got {got}"))
        }
        CalError::Replicate { index, source } => CliError::Runtime {
            replicate: Some(index),
            source: *source,
        },
        CalError::Io(e) => CliError::Io(e),
        other => CliError::Runtime {
            replicate: None,
            source: other,
        },
    }
}
