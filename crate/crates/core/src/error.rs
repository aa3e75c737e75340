use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("expected a {expected}-channel image, got {actual} channels")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("image is {width}x{height}, needs at least {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate transform: {0}")]
    DegenerateTransform(String),
    #[error("insufficient correspondences: need at least {needed}, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },
    #[error("all sampled models degenerate")]
    DegenerateSamples,
    #[error("non-injective matching: {0}")]
    NonInjective(String),
    #[error("external matcher failed: {0}")]
    Matcher(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("optimization diverged at level {level}, iteration {iteration}")]
    Diverged { level: usize, iteration: usize },
    #[error("landmark count mismatch: {0} vs {1}")]
    LandmarkCountMismatch(usize, usize),
    #[error("empty landmark set")]
    EmptyLandmarks,
    #[error("malformed file: {0}")]
    Format(String),
    #[error("empty field")]
    EmptyField,
    #[error("{}: {reason}", path.display())]
    File { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::File {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
