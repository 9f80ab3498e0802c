use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = BmcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BmcError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("index ({i}, {j}) out of range for {n} points")]
    Index { i: usize, j: usize, n: usize },

    #[error("solver diverged at iteration {iter}: {detail}")]
    Divergence { iter: usize, detail: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX file {path}: need {needed} bytes, have {actual}")]
    Truncated {
        path: String,
        needed: usize,
        actual: usize,
    },

    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl BmcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        BmcError::Io {
            path: path.into(),
            source,
        }
    }
}
