//! Crate-wide error type.

use std::path::PathBuf;

/// Errors raised by the fingerprinting and spoofing pipelines.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    ImageFormat { path: PathBuf, reason: String },

    #[error("dimension mismatch: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error("invalid image data: {0}")]
    InvalidImage(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("image {h}x{w} too small for a {levels}-level decomposition")]
    ImageTooSmall { h: usize, w: usize, levels: usize },

    #[error("no training images")]
    EmptyTrainingSet,

    #[error("sensor gallery is empty")]
    EmptyGallery,

    #[error("duplicate sensor id {0:?} in gallery")]
    DuplicateSensorId(String),

    #[error("pattern file {path}: {reason}")]
    PatternFormat { path: PathBuf, reason: String },

    #[error("source correlation {value} is not positive; the termination criterion is undefined")]
    NonPositiveSourceScore { value: f64 },

    #[error("patch count {requested} exceeds the {available} available patch positions")]
    TooManyPatches { requested: usize, available: usize },

    #[error("both reference patterns are zero; cannot normalize")]
    ZeroNormalizer,

    #[error("sensor {id:?}: need at least {needed} images, found {found}")]
    InsufficientImages {
        id: String,
        needed: usize,
        found: usize,
    },

    #[error("unknown sensor id {0:?}")]
    UnknownSensor(String),

    #[error("no test images to attack")]
    NothingToAttack,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
