use thiserror::Error;

/// Errors raised by the numerical and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument {0} is a pole of the gamma function")]
    Pole(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("size {size} exceeds the limit of {limit} for {what}")]
    Size {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("window mismatch: {0}")]
    WindowMismatch(String),

    #[error("site {0} listed more than once")]
    DuplicateSite(i64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration has probability {0:e}, too small to divide by")]
    ZeroProbability(f64),

    #[error("conditioning pattern not hit after {0} rejection attempts")]
    PatternTooRare(usize),

    #[error("site {0} given twice where two distinct sites are required")]
    SamePoint(i64),

    #[error("generator is not reversible (residual {0:e})")]
    NotReversible(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
