use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A window, table or vector has the wrong length.
    #[error("dimension mismatch: {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An operation was invoked in a state that does not permit it.
    #[error("invalid state: {0}")]
    State(String),

    #[error("average-cost evaluation did not converge after {iterations} iterations (last gap {gap:.3e})")]
    NotConverged { iterations: u64, gap: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// True for errors caused by user-provided configuration rather than
    /// runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Json(_) | Error::Parameter(_) | Error::Dimension { .. }
        )
    }
}
