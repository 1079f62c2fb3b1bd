use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("fields live on different bases")]
    BasisMismatch,

    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("blow-up at step {step} (t = {time}): {reason}")]
    BlowUp {
        step: usize,
        time: f64,
        reason: String,
    },

    #[error("time step {dt} exceeds the advection limit {limit} at step {step}")]
    StepTooLarge { dt: f64, limit: f64, step: usize },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("property violated: {0}")]
    Property(String),

    #[error("basis too large for dense assembly: {size} modes (limit {limit})")]
    BasisTooLarge { size: usize, limit: usize },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoConvergence(_) | Error::BlowUp { .. } | Error::NonFinite(_) => 2,
            Error::Property(_) => 3,
            Error::Io { .. } => 4,
            Error::Json(_) => 5,
            _ => 1,
        }
    }
}
