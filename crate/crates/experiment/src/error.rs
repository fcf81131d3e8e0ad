use std::path::PathBuf;

use thiserror::Error;
use vembeam_core::VemError;
use vembeam_surrogate::SurrogateError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },

    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("solver: {0}")]
    Solver(#[from] VemError),

    #[error("surrogate: {0}")]
    Surrogate(#[from] SurrogateError),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("{0}")]
    Numeric(String),
}

impl ExperimentError {
    /// Process exit code: 2 for usage problems, 1 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Input { .. } | Self::Malformed { .. } | Self::MeshMismatch(_) => 2,
            Self::Output { .. } | Self::Solver(_) | Self::Surrogate(_) | Self::Diverged { .. } | Self::Numeric(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
