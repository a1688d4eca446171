use std::fmt;

/// Errors produced by signal construction, simulation and identification.
#[derive(Debug)]
pub enum Error {
    /// An argument violates the contract of the operation it was passed to.
    InvalidArgument(String),
    /// A filter denominator has a pole on or outside the unit circle.
    Unstable(String),
    /// The simulation produced a non-finite sample.
    NonFinite { sample: usize, detail: String },
    /// A quantity required to be nonzero (signal power, loop response) vanished.
    Degenerate(String),
    /// Underlying file I/O failure.
    Io(std::io::Error),
    /// A file did not match the expected format.
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Unstable(msg) => write!(f, "unstable filter: {msg}"),
            Error::NonFinite { sample, detail } => {
                write!(f, "non-finite sample at index {sample}: {detail}")
            }
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}
