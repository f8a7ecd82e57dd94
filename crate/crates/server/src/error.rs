use std::path::PathBuf;

use thiserror::Error;

pub type ServerResult<T> = Result<T, ServerError>;

#[derive(Debug, Error)]
pub enum ServerError {
    /// Bad invocation: missing inputs or malformed overrides.
    #[error("{0}")]
    Usage(String),

    #[error("config {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: selftalk_core::Error,
    },

    #[error(transparent)]
    Serve(#[from] std::io::Error),
}

impl ServerError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn core(context: impl Into<String>, source: selftalk_core::Error) -> Self {
        Self::Core {
            context: context.into(),
            source,
        }
    }

    /// 1 for usage errors, 2 for everything touching data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            _ => 2,
        }
    }
}
