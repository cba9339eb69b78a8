use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on a dimension, count or other parameter failed.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation requested exactly on a kernel singularity.
    #[error("singular evaluation: {0}")]
    Singular(String),

    /// A discretization is too coarse for the requested operation.
    #[error("grid error: {0}")]
    Grid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed or truncated volume file.
    #[error("volume format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}

pub(crate) use ensure;
