use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, record {record}: {message}")]
    Parse {
        path: String,
        record: usize,
        message: String,
    },

    #[error("duplicate {kind} `{key}`")]
    Duplicate { kind: &'static str, key: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("singular normal equations (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("scorer contract violated: {0}")]
    Contract(String),

    #[error("scorer backend failed: {0}")]
    Backend(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Process exit code used by the CLI: 1 for bad input, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
            Error::Parse { .. }
            | Error::Duplicate { .. }
            | Error::Invalid(_)
            | Error::Config(_) => 1,
            Error::Io { .. }
            | Error::Singular { .. }
            | Error::Degenerate(_)
            | Error::Contract(_)
            | Error::Backend(_) => 2,
        }
    }
}
