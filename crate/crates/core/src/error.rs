use thiserror::Error;

/// Errors raised by model construction, evaluation and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The inputs describe a physically inconsistent model (for example a
    /// covariance matrix that is clearly not positive semi-definite).
    #[error("model consistency violated: {0}")]
    ModelConsistency(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
