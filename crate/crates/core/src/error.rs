use alloc::string::String;
use core::fmt;

/// Errors reported by the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A mesh, patch or operator argument is outside its admissible range.
    InvalidGeometry(String),
    /// A coefficient field violates its bounds or has the wrong length.
    InvalidCoefficient(String),
    /// Two operands have incompatible shapes.
    DimensionMismatch { expected: usize, found: usize, context: &'static str },
    /// A factorization met a non-positive or vanishing pivot.
    Singular(&'static str),
    /// A tolerance or spectral parameter is outside its admissible range.
    InvalidTolerance(String),
    /// The requested object would exceed a configured size limit.
    TooLarge { size: usize, limit: usize, what: &'static str },
    /// Network composition or realization was given inconsistent networks.
    Network(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGeometry(m) => write!(f, "invalid geometry: {m}"),
            Error::InvalidCoefficient(m) => write!(f, "invalid coefficient: {m}"),
            Error::DimensionMismatch { expected, found, context } => {
                write!(f, "dimension mismatch in {context}: expected {expected}, found {found}")
            }
            Error::Singular(what) => write!(f, "singular system in {what}"),
            Error::InvalidTolerance(m) => write!(f, "invalid tolerance: {m}"),
            Error::TooLarge { size, limit, what } => {
                write!(f, "{what} too large: {size} exceeds limit {limit}")
            }
            Error::Network(m) => write!(f, "network error: {m}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_dim(expected: usize, found: usize, context: &'static str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found, context })
    }
}
