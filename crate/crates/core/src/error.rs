use thiserror::Error;

/// Library-wide error type.
///
/// `InvalidInput` covers precondition and validation failures (bad exponents,
/// mismatched dimensions, malformed files); `Numerical` covers aborts raised
/// while a computation is in flight (non-finite state, divergent fixpoints).
/// The CLI maps these onto distinct exit codes.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
