use std::io;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value violates a domain invariant (non-finite, out of range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration is inconsistent or out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A CSV file could not be parsed. `row` is 1-based and counts the header.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// A feature channel has zero spread in the training data.
    #[error("degenerate input channel {channel}: zero standard deviation")]
    DegenerateChannel { channel: usize },

    /// A model file is malformed, truncated or of an unknown version.
    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by bad user-supplied configuration or input values,
    /// as opposed to I/O failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::Config(_))
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let row = err.position().map(|p| p.line() as usize).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse {
                row,
                column: String::from("-"),
                message: format!("{other:?}"),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
