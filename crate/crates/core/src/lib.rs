//! Training-free detection of generated images.
//!
//! An image is scored by how much a frozen embedding moves when a structured,
//! patchwise high-frequency perturbation is added to it:
//! `S(x) = cos(f(x), f(x + delta))`. Generated images tend to have
//! band-limited high-frequency content, so their embeddings move less and
//! they score higher.
//!
//! The crate is organised bottom-up:
//!
//! * [`image`] and [`manifest`]: decoding, resizing and labelled dataset lists.
//! * [`perturb`]: the FFT-masked Gaussian perturbation and its RNG keying in [`rng`].
//! * [`backend`]: embedding backends (a native CLIP-style ViT over safetensors
//!   weights, and a weight-free spectral reference).
//! * [`detector`]: the similarity score and batch scoring.
//! * [`eval`]: AUC/ROC, corruptions, and the evaluation/sweep/benchmark harness.
//! * [`config`]: the layered run configuration used by the CLI.

pub mod backend;
pub mod config;
pub mod detector;
pub mod error;
pub mod eval;
pub mod fft;
pub mod fixture;
pub mod image;
pub mod manifest;
pub mod perturb;
pub mod rng;

pub use crate::backend::{
    open_backend, Backend, BackendDescriptor, BackendHandle, BackendKind, Embedding,
};
pub use crate::detector::{cosine_similarity, score_batch, score_image, ScoreRecord};
pub use crate::error::{Error, Result};
pub use crate::image::{ImageTensor, PreprocessSpec, ResizeFilter};
pub use crate::manifest::{DatasetManifest, Label, ManifestEntry};
pub use crate::perturb::{perturb_image, HighPassMask, PerturbConfig, Perturber};

/// Crate version embedded in every output artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
