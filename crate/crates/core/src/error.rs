use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Not enough data for a statistic to be defined (empty pools, no qualifying edges).
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unstable process: branching ratio {ratio:.4} exceeds limit {limit}")]
    Unstable { ratio: f64, limit: f64 },

    /// The objective is not finite at the supplied parameters.
    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
