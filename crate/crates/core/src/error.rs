use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a mathematical precondition (zero vector, index out
    /// of range, dimension mismatch, unattainable angle, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration failed validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for `Err(Error::Domain(format!(...)))`.
macro_rules! domain_err {
    ($($arg:tt)*) => {
        Err($crate::error::Error::Domain(format!($($arg)*)))
    };
}
pub(crate) use domain_err;

macro_rules! config_err {
    ($($arg:tt)*) => {
        Err($crate::error::Error::Config(format!($($arg)*)))
    };
}
pub(crate) use config_err;
