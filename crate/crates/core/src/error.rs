use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator, theory engine and configuration layer.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's documented domain.
    #[error("usage error: {0}")]
    Usage(String),

    /// Configuration failed schema or invariant validation.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A binary input file did not match the expected layout.
    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    /// A numeric quantity became non-finite or a routine failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
