use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failures surfaced by the command-line runner.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{message}")]
    Config { field: Option<String>, message: String },

    #[error("{0}")]
    Numerical(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Shape of the JSON object written to stderr on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub exit_code: i32,
}

impl HarnessError {
    pub fn config(message: impl Into<String>) -> Self {
        HarnessError::Config { field: None, message: message.into() }
    }

    pub fn missing(field: &str) -> Self {
        HarnessError::Config {
            field: Some(field.to_string()),
            message: format!("missing required field \"{field}\""),
        }
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.into(), message: err.to_string() }
    }

    /// 2 for configuration problems, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Io { .. } => 1,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (kind, field, path) = match self {
            HarnessError::Config { field, .. } => ("config", field.clone(), None),
            HarnessError::Numerical(_) => ("numerical", None, None),
            HarnessError::Io { path, .. } => ("io", None, Some(path.display().to_string())),
        };
        ErrorReport {
            kind: kind.into(),
            message: self.to_string(),
            field,
            path,
            exit_code: self.exit_code(),
        }
    }
}

impl From<stackdyn::Error> for HarnessError {
    fn from(e: stackdyn::Error) -> Self {
        use stackdyn::Error as E;
        match e {
            E::Config(_) | E::DimensionMismatch { .. } | E::Precondition(_) | E::UnsupportedDimension(_) | E::SizeCap { .. } => {
                HarnessError::config(e.to_string())
            }
            E::Evaluation(_)
            | E::SingularFollowerHessian { .. }
            | E::IndefiniteOperator { .. }
            | E::EigenNonConvergence { .. }
            | E::FollowerNonConvergence { .. }
            | E::ConditioningFailure => HarnessError::Numerical(e.to_string()),
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
