//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by model construction, runners and the operator calculus.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A spectrum constructor received invalid parameters or values.
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    /// A configuration value violates its documented precondition.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A matrix expected to be symmetric is not, beyond tolerance.
    #[error("matrix not symmetric: relative asymmetry {asymmetry:.3e}")]
    Asymmetric { asymmetry: f64 },

    /// A tracked second-moment matrix lost positive semi-definiteness.
    #[error(
        "PSD invariant violated at step {step}: min eigenvalue {min_eigenvalue:.6e} \
         below -1e-10 x scale (scale {scale:.6e})"
    )]
    PsdViolation {
        step: usize,
        min_eigenvalue: f64,
        scale: f64,
    },

    /// An iterate or accumulator became non-finite.
    #[error("divergence at step {step}: non-finite value encountered")]
    Divergence { step: usize },

    /// An operation only defined for well-specified noise was asked to run
    /// on a mis-specified model.
    #[error("{0} requires a well-specified model")]
    RequiresWellSpecified(&'static str),

    /// Reading a config or writing an artifact failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Serializing an output table failed.
    #[error("output error: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, Error>;
