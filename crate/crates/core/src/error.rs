use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A text input did not follow its line format.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unknown topic `{0}`")]
    UnknownTopic(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("session `{0}` not found")]
    NotFound(String),

    #[error("store is closed")]
    StoreClosed,

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
