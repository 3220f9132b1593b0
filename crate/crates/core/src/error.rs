use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("incompatible grids: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("ray count mismatch: expected {expected}, found {found}")]
    RayCountMismatch { expected: usize, found: usize },

    #[error("degenerate polygon: need at least 3 rays, got {0}")]
    DegenerateRayCount(usize),

    #[error("pixel ({row}, {col}) is outside a {height}x{width} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("pixel ({row}, {col}) is not set in the mask and cannot be a star centre")]
    InvalidStarCentre { row: usize, col: usize },

    #[error("undefined denominator: {0}")]
    UndefinedDenominator(&'static str),

    #[error("instance id {0} not present in mask")]
    MissingInstance(u32),

    #[error("empty ground truth: {0}")]
    EmptyGroundTruth(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("placement failed after {retries} attempts: {constraint}")]
    Placement { constraint: String, retries: usize },

    #[error("non-finite loss at iteration {iteration}: {value}")]
    NonFinite { iteration: usize, value: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("malformed payload: {0}")]
    MalformedPayload(String),

    #[error("unsupported PNG layout: {0}")]
    UnsupportedPng(String),

    #[error("instance id {0} exceeds the 16-bit PNG limit; use the portable .sseg format")]
    IdTooLarge(u32),

    #[error("png: {0}")]
    Png(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
