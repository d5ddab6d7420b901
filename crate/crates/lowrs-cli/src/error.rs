use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid {field}: {msg}")]
    Validation { field: &'static str, msg: String },
    #[error("relative error undefined: ground truth has zero norm")]
    DegenerateTruth,
    #[error("ROC undefined: ground truth has no anomalies")]
    NoAnomalies,
    #[error(transparent)]
    Core(#[from] lowrs::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Process exit code for this failure; the README documents the mapping.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } => 1,
            CliError::Core(lowrs::Error::ConnectivityFailure { .. }) => 4,
            CliError::Io { .. } => 5,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
