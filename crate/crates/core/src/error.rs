use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("layer {layer}: expected input dimension {expected}, found {found}")]
    DimensionChain {
        layer: usize,
        expected: usize,
        found: usize,
    },

    #[error("parse error at line {line}, field {field}: {msg}")]
    Parse {
        line: usize,
        field: usize,
        msg: String,
    },

    #[error("dataset row {row}: {msg}")]
    Dataset { row: usize, msg: String },

    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },

    #[error("dense materialization refused: d = {d} exceeds limit {limit}")]
    DenseGuard { d: usize, limit: usize },

    #[error("training reached {accuracy:.4} held-out accuracy, below the {gate:.4} gate")]
    TrainingGate { accuracy: f64, gate: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
