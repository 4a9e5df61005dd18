use orbit_core::scenario::ValidationReport;
use orbit_core::CoreError;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed scenario file: {0}")]
    Parse(String),
    #[error("unknown or malformed override `{key}`: {message}")]
    Override { key: String, message: String },
    #[error("invalid scenario: {0}")]
    Validation(ValidationReport),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error(transparent)]
    Core(CoreError),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidScenario(report) => CliError::Validation(report),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                CoreError::DimensionMismatch { .. }
                | CoreError::IndexOutOfRange { .. }
                | CoreError::InvalidTax { .. }
                | CoreError::Domain(_) => 2,
                _ => 3,
            },
            CliError::Assumption(_) => 4,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Parse(_) => "parse",
            CliError::Override { .. } => "override",
            CliError::Validation(_) => "validation",
            CliError::Assumption(_) => "assumption",
            CliError::Core(e) => e.kind(),
        }
    }

    /// Error object written to stderr.
    pub fn to_json(&self) -> Value {
        let mut obj = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        match self {
            CliError::Validation(report) => {
                obj["violations"] = serde_json::to_value(&report.violations).unwrap_or(Value::Null);
            }
            CliError::Override { key, .. } => obj["key"] = json!(key),
            _ => {}
        }
        obj
    }
}

pub type CliResult<T> = Result<T, CliError>;
