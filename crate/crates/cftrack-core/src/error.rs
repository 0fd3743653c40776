//! Crate-wide error type.

use crate::spectral::Grid2;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid mismatch: expected {expected:?}, got {got:?}")]
    GridMismatch { expected: Grid2, got: Grid2 },

    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("feature file {path}: bad magic bytes")]
    FeatureFileMagic { path: String },

    #[error("feature file {path}: truncated or malformed")]
    FeatureFileTruncated { path: String },

    #[error("feature file {path}: non-finite value at index {index}")]
    FeatureFileNonFinite { path: String, index: usize },

    #[error("annotation file missing in {dir}")]
    MissingAnnotations { dir: String },

    #[error("annotation parse error at {path}:{line}: {msg}")]
    AnnotationParse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("sequence {dir} contains no frames")]
    EmptySequence { dir: String },

    #[error("solver diverged at iteration {iteration}: non-finite values")]
    Diverged { iteration: usize },

    #[error("search window has left the frame")]
    LostTarget,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}
