use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Feature vectors or matrices with incompatible widths.
    DimensionMismatch { expected: usize, found: usize },
    /// Two sequences that must be aligned have different lengths.
    LengthMismatch { left: usize, right: usize },
    InvalidParameter(String),
    InvalidData(String),
    /// Row filtering left nothing (or too little) to work with.
    EmptySubset,
    /// The Gram matrix could not be factorized even at the largest jitter.
    CholeskyFailed { jitter: f64 },
    /// A predictive variance came out clearly negative before clamping.
    NegativeVariance { value: f64 },
    /// R² is undefined when the targets have no spread.
    ZeroVariance,
    /// An objective could not be evaluated at the initial point.
    ObjectiveFailed(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::InvalidData(msg) => write!(f, "invalid data: {msg}"),
            Error::EmptySubset => write!(f, "row selection is empty"),
            Error::CholeskyFailed { jitter } => {
                write!(f, "cholesky factorization failed with jitter up to {jitter:e}")
            }
            Error::NegativeVariance { value } => {
                write!(f, "predictive variance {value:e} is negative beyond round-off")
            }
            Error::ZeroVariance => write!(f, "targets have zero total variance"),
            Error::ObjectiveFailed(msg) => write!(f, "objective evaluation failed: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
