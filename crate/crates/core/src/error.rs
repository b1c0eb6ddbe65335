use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("horizon {requested} exceeds the cap T_max = {cap}")]
    Horizon { requested: usize, cap: usize },

    #[error("no feasible horizon up to T_max = {cap}")]
    HorizonExhausted { cap: usize },

    #[error("user {user} has no active slot, payload not delivered")]
    IncompleteDelivery { user: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("thresholding changed delivered bits of user {user} by {relative_change:.3e} (relative)")]
    DegradedDelivery { user: usize, relative_change: f64 },

    #[error("enumeration needs {patterns} patterns, cap is {cap}")]
    EnumerationCap { patterns: f64, cap: usize },

    #[error("invalid conic program: {}", .0.join("; "))]
    InvalidProgram(Vec<String>),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
