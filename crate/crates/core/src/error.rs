use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("infeasible dispatch at index {index}: {reason}")]
    InfeasibleDispatch { index: usize, reason: String },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded: {0}")]
    Unbounded(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
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
        Error::InvalidInput(msg.into())
    }

    /// True for failures that come from the optimizer rather than from bad inputs.
    pub fn is_solver_error(&self) -> bool {
        matches!(
            self,
            Error::Infeasible | Error::Unbounded(_) | Error::Solver(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
