use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("PDHG step sizes violate tau*sigma*L^2 <= 1: tau={tau}, sigma={sigma}, norm={norm}")]
    StepSize { tau: f64, sigma: f64, norm: f64 },

    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
