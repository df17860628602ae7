use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the banded solver and its helpers.
#[derive(Debug, Error)]
pub enum SpikeError {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// A pivot column was exactly zero on and below the diagonal.
    #[error("matrix is singular: zero pivot column at row {row}")]
    Singular { row: usize },

    /// The residual metric is undefined: the right-hand side is zero but the
    /// candidate solution is not.
    #[error("degenerate residual: right-hand side is zero but solution is not")]
    DegenerateResidual,

    #[error("invalid thread count {0}: at least one thread is required")]
    InvalidThreads(usize),

    #[error("partition plan does not match matrix: {0}")]
    PlanMismatch(String),

    #[error("timer resolution too coarse: measured {elapsed_ms:.3} ms, use a larger sample (n >= {suggested_n})")]
    TimerResolution { elapsed_ms: f64, suggested_n: usize },

    #[error("malformed matrix file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("entry ({row}, {col}) lies outside the declared band kl={kl}, ku={ku}")]
    BandOverflow {
        row: usize,
        col: usize,
        kl: usize,
        ku: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SpikeError>;
