use thiserror::Error;

/// Errors raised by the numerical core.
///
/// Variants are grouped so that callers (the CLI in particular) can tell
/// user mistakes apart from numeric-regime failures.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the documented domain of an operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A mathematical precondition of an operation is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Two objects built on different grids or cross-sections were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// An exponential would leave the representable range.
    #[error("numeric overflow: {0}")]
    Overflow(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed serialized data.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            }
        } else {
            Error::Parse(e.to_string())
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !($cond) {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
