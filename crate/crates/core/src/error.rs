use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A feature column whose L2 norm fell below the configured epsilon.
    #[error("degenerate feature vector at sample {index} (norm {norm:e})")]
    DegenerateFeature { index: usize, norm: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// NaN or infinity produced by an update.
    #[error("non-finite values: {0}")]
    NonFinite(String),

    #[error("invalid label: {0}")]
    Label(String),

    #[error("invalid dataset spec: {0}")]
    Spec(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("cannot build split: {0}")]
    Split(String),

    #[error("evaluation failed: {0}")]
    Eval(String),

    /// Wraps another error with training-loop position.
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Innermost error, skipping any training-position wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Training { source, .. } => source.root(),
            other => other,
        }
    }
}
