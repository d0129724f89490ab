use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("path delay {tau_s:e} s outside [0, {max_s:e}] s")]
    DelayOutOfRange { tau_s: f64, max_s: f64 },

    #[error("system response is not invertible at frequency index {index} (|S| = {magnitude:e})")]
    SingularResponse { index: usize, magnitude: f64 },

    #[error("all-zero channel: {0}")]
    NoPower(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: missing sample for direction {dir} frequency {freq}")]
    MissingSample { path: PathBuf, dir: usize, freq: usize },

    // the cause is part of the message, so it is not exposed as `source`
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    ///
    /// The CLI maps these to exit code 2 and everything else to 1.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularResponse { .. } | Error::NoPower(_) | Error::SingularFit(_)
        )
    }
}
