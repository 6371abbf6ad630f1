use thiserror::Error;

/// Errors produced by the library.
///
/// The variants map onto the CLI's exit codes: [`Error::Config`] is a
/// configuration problem (exit code 1), everything else is a runtime failure
/// (exit code 2).
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates an invariant.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input signal has the wrong shape for the requested operation.
    #[error("input error: {0}")]
    Input(String),

    /// A measurement or solve could not produce an estimate.
    #[error("estimation failure: {0}")]
    Estimation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }

    /// True for configuration errors.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
