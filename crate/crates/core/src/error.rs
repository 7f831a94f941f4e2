use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside an operation's domain (empty coalition, bad
    /// probability, length mismatch).
    #[error("domain error: {0}")]
    Domain(String),

    /// A model, estimator or experiment configuration that cannot be run.
    #[error("configuration error: {0}")]
    Config(String),

    /// Numerical failure that should not happen on valid input.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("linear program: {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Json(_) => 2,
            _ => 1,
        }
    }
}
