use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the sparsification library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    /// A record violates the map schema.
    #[error("schema violation in {section}[{index}]: {message}")]
    Schema {
        section: &'static str,
        index: usize,
        message: String,
    },

    /// Observations or keyframes reference ids that do not exist.
    #[error("referential integrity violated: {message} (dangling ids: {dangling:?})")]
    Integrity { message: String, dangling: Vec<u64> },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("3D grid has {cells} cells which exceeds the cap of {cap}; use a coarser resolution")]
    GridTooLarge { cells: u64, cap: u64 },

    #[error("numerical failure after {iterations} iterations: {message}")]
    Numerical { iterations: usize, message: String },

    #[error("solution check failed: {0}")]
    Check(String),

    #[error("problem has {0} landmarks; exhaustive search is limited to 25")]
    TooLarge(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
