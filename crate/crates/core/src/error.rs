use thiserror::Error;

use crate::tensor::TensorType;

/// Errors raised by the geometry, embedding and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("chart is invalid: {0}")]
    InvalidChart(String),

    #[error("point {point:?} left the chart domain during {context}")]
    DomainExit { point: Vec<f64>, context: &'static str },

    #[error("support {support} does not fit inside {container}")]
    SupportOverflow { support: String, container: String },

    #[error("tensor type mismatch: expected {expected}, got {found}")]
    TypeMismatch { expected: TensorType, found: TensorType },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rank cap exceeded: r + s = {0} > 4")]
    RankCap(usize),

    #[error("basis change is singular at {0:?}")]
    SingularBasisChange(Vec<f64>),

    #[error("jacobian is singular at {0:?}")]
    SingularJacobian(Vec<f64>),

    #[error("quadrature budget exceeded: {points} points requested, limit {limit}")]
    QuadratureBudget { points: usize, limit: usize },

    #[error("quadrature under-resolved: doubling changed the result by {change:e} (tolerance {tolerance:e})")]
    UnderResolved { change: f64, tolerance: f64 },

    #[error("unsupported distribution variant: {0}")]
    UnsupportedVariant(String),

    #[error("unknown {kind} catalog entry `{name}`")]
    UnknownCatalogName { kind: &'static str, name: String },

    #[error("invalid catalog parameters for `{name}`: {reason}")]
    CatalogParams { name: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("element membership violated: {0}")]
    Membership(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
