use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The chain sits at (or was started from) a state with zero target density.
    #[error("state is outside the target support (log density = {log_density})")]
    OffSupport { log_density: f64 },

    #[error("{what} evaluated to NaN")]
    NotANumber { what: &'static str },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing analytic oracle for model `{0}`")]
    MissingOracle(String),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("Newton iteration did not converge after {iterations} steps (gradient norms: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: impl ToString, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value: value.to_string(),
            reason: reason.into(),
        }
    }
}
