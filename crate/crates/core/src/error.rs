use thiserror::Error;

use crate::model::UserSet;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("unknown user {user} (instance has {users} users)")]
    UnknownUser { user: usize, users: usize },

    #[error("stream {0} is not active in the layout")]
    UnknownStream(UserSet),

    #[error("user {user} does not decode stream {stream}")]
    NotInStream { user: usize, stream: UserSet },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("allocation on stream {stream} exceeds its rate by {excess:.3e} bit/s/Hz")]
    InfeasibleAllocation { stream: UserSet, excess: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid scheme: {0}")]
    InvalidScheme(String),

    #[error("subproblem assembly failed: {0}")]
    Assembly(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            line,
            message: err.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
