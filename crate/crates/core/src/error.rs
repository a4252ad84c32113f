use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid {nx}x{nt}: both sizes must be even and at least 8")]
    InvalidGrid { nx: usize, nt: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("period must be positive, got {0}")]
    NonPositivePeriod(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field is identically zero")]
    ZeroField,

    #[error("plane wave k={k} needs R > k^2 (R = {r})")]
    NoPlaneWave { k: i32, r: f64 },

    #[error("shift re-expression sends mode ({m},{n}) of magnitude {magnitude:e} outside the retained range")]
    ShearRange { m: i32, n: i32, magnitude: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("integration blew up at t = {t} (norm {norm:e})")]
    BlowUp { t: f64, norm: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
