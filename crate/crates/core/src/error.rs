use thiserror::Error;

/// Errors raised by kernel construction, solves, and spectral operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A point is outside the domain of a lookup kernel.
    #[error("point outside kernel domain: {0}")]
    Domain(String),

    /// An argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A factorization or decomposition failed or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A function has a component outside the retained spectral span.
    #[error("outside retained range: {0}")]
    Range(String),

    /// A hypothesis behind the error bounds does not hold (non-universal kernel, κ < 1, δ too large, ...).
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! arg_err {
    ($($t:tt)*) => { $crate::error::Error::Argument(format!($($t)*)) };
}
pub(crate) use arg_err;
