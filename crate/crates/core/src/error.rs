use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank-deficient target: {0}")]
    RankDeficientTarget(String),

    #[error("operator was built for a different Gram matrix")]
    GramMismatch,

    #[error("loss became non-finite at epoch {epoch} (last finite epoch: {last_good_epoch:?})")]
    NonFiniteLoss {
        epoch: usize,
        last_good_epoch: Option<usize>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

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
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn singular(msg: impl Into<String>) -> Self {
        Error::SingularMatrix(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class. Zero is reserved for success.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::SingularMatrix(_) => 3,
            Error::RankDeficientTarget(_) => 4,
            Error::NonFiniteLoss { .. } => 5,
            Error::Io { .. } => 6,
            Error::InvalidConfig(_) => 7,
            Error::DimensionMismatch(_) => 8,
            Error::NonSymmetric { .. } => 9,
            Error::GramMismatch => 10,
        }
    }
}
