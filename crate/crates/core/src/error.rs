use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::BBox;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): corners must satisfy x1 < x2 and y1 < y2")]
    DegenerateBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("patch buffer holds {len} pixels but shape is {width}x{height}")]
    PatchShape { width: usize, height: usize, len: usize },

    #[error("pixel intensity {value} at offset {offset} is outside [0, 1]")]
    PixelRange { offset: usize, value: f64 },

    #[error("patch shapes differ: {left:?} vs {right:?}")]
    PatchMismatch { left: (usize, usize), right: (usize, usize) },

    #[error("patch {width}x{height} is smaller than the {window}-pixel SSIM window")]
    PatchTooSmall { width: usize, height: usize, window: usize },

    #[error("box{} {bbox:?} lies entirely outside the image", index.map(|i| format!(" #{i}")).unwrap_or_default())]
    BoxOutsideImage { index: Option<usize>, bbox: BBox },

    #[error("invalid SSIM configuration: {0}")]
    SsimConfig(String),

    #[error("invalid permutation: {0}")]
    Permutation(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension { what: &'static str, expected: usize, actual: usize },

    #[error("invalid weights ({w1}, {w2}, {w3}): {reason}")]
    Weights { w1: f64, w2: f64, w3: f64, reason: &'static str },

    #[error("confidence {value} at index {index} is outside (0, 1]")]
    Confidence { index: usize, value: f64 },

    #[error("QUBO matrix is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },

    #[error("exhaustive search refused: {n} variables exceeds the limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("solver backend `{0}` is reserved and has no implementation in this build")]
    BackendUnavailable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("appearance-based method `{0}` needs an image raster")]
    MissingImage(String),

    #[error("detection record {index}: {reason}")]
    Record { index: usize, reason: String },

    #[error("predictions reference categories absent from ground truth: {0:?}")]
    UnknownCategories(Vec<i64>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}
