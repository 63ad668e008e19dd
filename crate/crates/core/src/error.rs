use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad classification used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad or insufficient input data.
    Data,
    /// Bad parameters or configuration.
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty cloud")]
    EmptyCloud,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0}; expected 2 or 3")]
    BadDimension(usize),

    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),

    #[error("direction is not a unit vector (norm {0})")]
    NonUnitDirection(f64),

    #[error("rotation is not orthonormal with determinant +1")]
    NotARotation,

    #[error("no valid entropies")]
    NoValidEntropies,

    #[error("no overlap between the point cloud and the NDT grid")]
    NoOverlap,

    #[error("no cell has enough points")]
    NoQualifyingCells,

    #[error("zero correspondences within association radius")]
    NoCorrespondences,

    #[error("zero-error misalignment")]
    ZeroErrorMisalignment,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("non-finite loss during training")]
    NonFiniteLoss,

    #[error("feature arity mismatch: model expects {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("insufficient pairs: {0}")]
    InsufficientPairs(String),

    #[error("scan spacing {0} m is unreachable in the sequence")]
    SpacingUnreachable(f64),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonUnitDirection(_)
            | Error::NotARotation
            | Error::BadDimension(_)
            | Error::ZeroErrorMisalignment
            | Error::UnknownMetric(_)
            | Error::InvalidParams(_)
            | Error::Json(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn params(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::InvalidData(msg.into())
    }
}
