use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: {0}")]
    Shape(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: u64, reason: String },

    #[error("stability guard: {0}")]
    Stability(String),

    #[error("no soliton detected")]
    NoSoliton,

    #[error("insufficient frames for tracking: {found} usable, {required} required")]
    InsufficientFrames { found: usize, required: usize },

    #[error("supersonic fit failure: |v|/(2 sqrt h) = {ratio:.6} exceeds 1")]
    Supersonic { ratio: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unknown export kind `{0}`")]
    UnknownKind(String),

    #[error("malformed trajectory file: {0}")]
    Format(String),

    #[error("{stage} stage failed (config {digest}): {source}")]
    Stage {
        stage: &'static str,
        digest: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
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

    /// Innermost error when wrapped in stage context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
