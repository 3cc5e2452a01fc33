use std::path::PathBuf;

use thiserror::Error;

/// Errors shared across the signal, autodiff, model and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch in {op}: {details}")]
    Shape { op: &'static str, details: String },

    #[error("empty symbol stream requested (count must be > 0)")]
    EmptyStream,

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("malformed one-hot labels: {0}")]
    Label(String),

    #[error("training diverged (non-finite loss) at step {step} with seed {seed}")]
    Diverged { step: usize, seed: u64 },

    #[error("dataset not found: {0}")]
    MissingDataset(PathBuf),

    #[error("bad file format for {path}: {details}")]
    Format { path: PathBuf, details: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
