use thiserror::Error;

/// Errors produced by configuration parsing, simulation setup and the
/// numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing or out of range. `field` names the
    /// offending entry using its configuration path.
    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("unknown task id {0}")]
    UnknownTask(u32),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An iterative method failed to converge or produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Dimension(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
