use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid sample at node {node}: value {value}")]
    InvalidSample { node: usize, value: f64 },

    #[error("point {0:?} lies outside the field domain")]
    OutOfDomain(Vec<f64>),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("foot-point projection did not converge for point {0:?}")]
    ProjectionFailed(Vec<f64>),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
