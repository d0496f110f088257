use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data failed validation; `locations` lists every offending
    /// (row, index) pair.
    #[error("validation failed: {message}")]
    Validation {
        message: String,
        locations: Vec<(usize, usize)>,
    },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code convention: 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SingularDesign(_) | Error::Internal(_) => 2,
            _ => 1,
        }
    }
}
