use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model, recipe or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A value went non-finite during a computation.
    #[error("numeric failure at {location}: {detail}")]
    Numeric { location: String, detail: String },

    /// An operation invoked in the wrong state (e.g. backward twice).
    #[error("state error: {0}")]
    State(String),

    /// Malformed binary or text input.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    /// A record that does not satisfy its schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A prerequisite artifact or result row is absent.
    #[error("missing dependency: {0}")]
    Dependency(String),

    /// Degenerate input for an analysis (e.g. rank-deficient trajectory).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(offset: u64, detail: impl Into<String>) -> Self {
        Error::Format {
            offset,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefix the location of a numeric failure, leaving other kinds untouched.
    pub fn at(self, outer: &str) -> Self {
        match self {
            Error::Numeric { location, detail } => Error::Numeric {
                location: format!("{outer}/{location}"),
                detail,
            },
            other => other,
        }
    }
}
