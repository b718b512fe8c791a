use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("validation failed: {0}")]
    Validation(String),

    /// The order-3 splitting is only real when its radicand is nonnegative.
    #[error("gamma = {gamma} gives no real order-3 scheme: {reason} (radicand = {radicand})")]
    Domain {
        gamma: f64,
        radicand: f64,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("refused: {0}")]
    Refused(String),

    /// A run completed but one of its checks did not hold.
    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

impl Error {
    /// Whether the error stems from invalid user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::InvalidSize(_)
                | Error::Validation(_)
                | Error::Domain { .. }
                | Error::Config(_)
                | Error::Refused(_)
        )
    }
}
