use thiserror::Error;

/// Errors produced by the detection pipeline.
#[derive(Debug, Error)]
pub enum HugError {
    /// Invalid configuration value (bad probabilities, schedules, grids, ...).
    #[error("config error: {0}")]
    Config(String),
    /// Malformed or unusable input data.
    #[error("data error: {0}")]
    Data(String),
    /// A numerical precondition does not hold (degenerate hulls, empty inputs, ...).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HugError>;

impl HugError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        HugError::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        HugError::Data(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        HugError::Domain(msg.into())
    }
}
