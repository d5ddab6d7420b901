use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("iteration budget exhausted in {0}")]
    NonConvergence(&'static str),
    #[error("matrix not positive definite: pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("no connected graph after {attempts} attempts; communication range too small")]
    ConnectivityFailure { attempts: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("agent {agent} is missing the round message from neighbor {neighbor}")]
    MissingMessage { agent: usize, neighbor: usize },
    #[error("non-finite entry in {0}; the run diverged (reduce mu or c)")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
