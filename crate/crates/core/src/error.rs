use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {message} (achieved error estimate {achieved_error:e})")]
    NumericalFailure {
        message: String,
        achieved_error: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, achieved_error: f64) -> Self {
        Error::NumericalFailure {
            message: msg.into(),
            achieved_error,
        }
    }

    /// Whether this error stems from bad input rather than a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidArgument(_))
    }
}
