use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("entry buffer has length {len}, expected {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("smallest singular value needs rows >= cols, got {rows}x{cols}")]
    WideMatrix { rows: usize, cols: usize },

    #[error("basis is not orthonormal (residual {residual:e})")]
    NotOrthonormal { residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spectrum value {value} outside [1/K0, K0] with K0 = {k0}")]
    SpectrumOutOfRange { value: f64, k0: f64 },

    #[error("B norm target {target} exceeds K0*sqrt(N) = {bound}")]
    BNormTooLarge { target: f64, bound: f64 },

    #[error("truncation at level {level} leaves variance {variance:e}")]
    DegenerateTruncation { level: f64, variance: f64 },

    #[error("epsilon-net construction failed: {0}")]
    NetConstruction(String),

    #[error("certified subspace LCD supports dimension <= 2, got {0}; use Monte Carlo mode")]
    CertifiedDimension(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
