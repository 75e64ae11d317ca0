use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid size {0}: must be even and at least 16")]
    InvalidGrid(usize),

    #[error("grid mismatch: expected {expected} samples, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("profile must be strictly positive: sample {index} is {value}")]
    NonPositiveProfile { index: usize, value: f64 },

    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),

    #[error("linear system is singular to working precision ({0})")]
    Singular(&'static str),

    #[error("solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("right-hand side must have zero mean, found {mean:e}")]
    NotMeanZero { mean: f64 },

    #[error("solve context was built for a different contour")]
    ContextMismatch,

    #[error("ray root-find failed at τ = {tau}: {reason}")]
    RootFind { tau: f64, reason: String },

    #[error("point ({x}, {y}) rejected: {reason}")]
    PointRejected {
        x: f64,
        y: f64,
        reason: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("evolution aborted at t = {t}: {reason}")]
    Breakdown { t: f64, reason: String },

    #[error("malformed operator dump: {0}")]
    Dump(String),
}
