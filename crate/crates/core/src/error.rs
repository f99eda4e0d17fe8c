use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge (last iterates {previous:e} and {last:e})")]
    Quadrature { previous: f64, last: f64 },

    #[error("Laplace inversion unstable: {0}")]
    Inversion(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("generator trace is not Cauchy: {0:?}")]
    Trace(Vec<f64>),

    #[error("table coverage: {0}")]
    Coverage(String),

    #[error("failed check: {0}")]
    Check(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
