use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is outside its allowed domain.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric argument is outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector lengths or dimensions disagree.
    #[error("shape error: expected {expected}, got {got} ({context})")]
    Shape {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// The simulated recursion produced a non-finite value.
    #[error("simulation produced a non-finite value at step {step} (value {value})")]
    Simulation { step: usize, value: f64 },

    /// A Monte-Carlo estimate could not be formed.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// The noise law does not satisfy a required model condition.
    #[error("model error: {0}")]
    Model(String),

    /// An internal invariant was violated.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Malformed input file.
    #[error("parse error in {path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from user-supplied configuration rather than
    /// from a failure during a run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Domain(_) | Error::Shape { .. } | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
