use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("{what}: expected width {expected}, got {got}")]
    WidthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("non-finite gradient entry at parameter {0}")]
    NonFiniteGradient(usize),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("derivative targets are missing from the training set")]
    MissingDerivatives,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SurrogateError>;
