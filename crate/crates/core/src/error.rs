use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate sample: zero median distance")]
    DegenerateSample,

    #[error("insufficient samples for covariance: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("training diverged at epoch {epoch}: non-finite loss (trace: {trace:?})")]
    Diverged { epoch: usize, trace: Vec<f64> },

    #[error("epsilon too small: all ABC weights underflow, try a larger epsilon")]
    EpsilonTooSmall,

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

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

    pub(crate) fn parse(row: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            row,
            msg: msg.into(),
        }
    }

    /// Whether the error came from malformed input data rather than bad configuration
    /// or a numerical breakdown.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Csv(_) | Error::Io(_) | Error::DimensionMismatch { .. }
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::Diverged { .. }
                | Error::EpsilonTooSmall
                | Error::DegenerateSample
                | Error::InsufficientSamples { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
