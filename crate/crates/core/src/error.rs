use thiserror::Error;

/// Errors raised while building elements, assembling frames or comparing fields.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VemError {
    #[error("element order must be at least 3, got {0}")]
    InvalidOrder(usize),

    #[error("element length must be positive and finite, got {0}")]
    InvalidLength(f64),

    #[error("material parameters must be positive: E={e}, A={a}, I={i}")]
    InvalidMaterial { e: f64, a: f64, i: f64 },

    #[error("monomial power must be non-negative, got {0}")]
    NegativePower(i32),

    #[error("distributed load of degree {degree} needs element order >= {}, got {order}", degree + 4)]
    UnsupportedLoad { degree: usize, order: usize },

    #[error("projection Gram matrix is numerically singular (order {order}, length {length})")]
    SingularProjection { order: usize, length: f64 },

    #[error("invalid frame: {0}")]
    InvalidModel(String),

    #[error("reduced stiffness is singular: unrestrained mechanism at {0}")]
    Mechanism(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),
}

pub type Result<T> = std::result::Result<T, VemError>;
