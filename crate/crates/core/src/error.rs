use thiserror::Error;

/// Errors raised across topology construction, mixing, solving and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("node index {index} out of range for n={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("support violation at ({i}, {j}): weight {value} on a non-edge")]
    SupportViolation { i: usize, j: usize, value: f64 },

    #[error("{what} did not converge after {iters} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("divergence at step {step}: non-finite or exploding iterate")]
    Divergence { step: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
