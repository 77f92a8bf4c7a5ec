use thiserror::Error;

/// Errors raised by the aggregation library.
///
/// The variants map onto the exit-status classes used by the command-line
/// front end, so keep them coarse.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A numeric argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Two inputs disagree on a length or shape.
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// The input is structurally invalid for the requested operation.
    #[error("invalid input: {0}")]
    Input(String),
    /// An enumeration or allocation would exceed its configured budget.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    /// A serialized document could not be parsed.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
