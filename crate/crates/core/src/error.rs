use alloc::string::String;

/// Errors raised by the solvers and model constructors.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("switching times must be strictly increasing (index {0})")]
    NonMonotoneTau(usize),
    #[error("switching time {value} at index {index} lies outside (0, T)")]
    TauOutOfRange { index: usize, value: f64 },
    #[error("points per interval must be at least 2, got {0}")]
    TooFewPoints(usize),
    #[error("time {0} lies outside [0, T]")]
    TimeOutOfRange(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("inner fixed point did not converge at node {node} (residual {residual:e})")]
    InnerNotConverged { node: usize, residual: f64 },
    #[error("missing derivative callable `{0}`")]
    MissingDerivative(&'static str),
    #[error("path enumeration from {j} to {i} exceeds the cap of 20 steps")]
    PathEnumerationTooLarge { j: usize, i: usize },
    #[error("enumeration grid has {0} points, above the limit of 1e6")]
    GridTooLarge(u128),
    #[error("invalid control box: {0}")]
    InvalidBox(String),
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = core::result::Result<T, Error>;
