use thiserror::Error;

/// Errors produced by the solvers, kernels and file readers.
#[derive(Debug, Error)]
pub enum HoprError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported size {n} (maximum {max})")]
    UnsupportedSize { n: usize, max: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HoprError>;

pub(crate) fn invalid_input(msg: impl Into<String>) -> HoprError {
    HoprError::InvalidInput(msg.into())
}

pub(crate) fn invalid_config(msg: impl Into<String>) -> HoprError {
    HoprError::InvalidConfig(msg.into())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(HoprError::DimensionMismatch { expected, found })
    }
}
