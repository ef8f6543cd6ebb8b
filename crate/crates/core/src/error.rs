use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("manifest {0} contains no entries")]
    EmptyManifest(PathBuf),

    #[error("no {0} samples to evaluate")]
    EmptyClass(&'static str),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("embedding dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("cosine similarity is undefined for an all-zero embedding")]
    ZeroVector,

    #[error("layer {layer} out of range 0..={layer_count}")]
    LayerOutOfRange { layer: usize, layer_count: usize },

    #[error("failed to load model bundle {path}: {reason}")]
    BundleLoad { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0} is not supported by this backend")]
    Unsupported(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("image encoding failed: {0}")]
    Encode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
