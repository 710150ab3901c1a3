use thiserror::Error;

/// Errors shared across the tracking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A shape, hyperparameter, or file layout does not fit the configured model.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called in a way its contract forbids (e.g. backward on an
    /// untaped value).
    #[error("usage error: {0}")]
    Usage(String),

    /// A gradient or loss stopped being finite; carries the offending parameter.
    #[error("non-finite value in `{name}`: {detail}")]
    NonFinite { name: String, detail: String },

    /// Malformed input file.
    #[error("parse error in {file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }
}
