use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Unsupported or corrupt file contents.
    #[error("format error: {0}")]
    Format(String),
    /// Caller passed structurally invalid arguments (shape mismatch, bad stride, ...).
    #[error("argument error: {0}")]
    Argument(String),
    /// Value outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Non-finite intermediate or failed numeric check at runtime.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A denoiser oracle failed (bad exit status, timeout, malformed output).
    #[error("oracle error: {0}")]
    Oracle(String),
    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
