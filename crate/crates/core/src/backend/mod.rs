//! Embedding backends.
//!
//! A backend maps a preprocessed image to a fixed-length embedding. Two kinds
//! exist: a CLIP-style vision transformer evaluated natively from a
//! [`ModelBundle`](bundle::ModelBundle), and a weight-free spectral reference
//! used for offline testing. Both are stateless after construction, so one
//! handle can serve many threads.

pub mod bundle;
pub mod spectral;
pub mod vit;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

pub use bundle::{BundleMetadata, ModelBundle};
pub use spectral::SpectralReference;
pub use vit::VitBackend;

/// Default transformer block whose CLS token is used.
pub const DEFAULT_LAYER: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding(self.0.iter().map(|v| v * factor).collect())
    }
}

pub trait Backend: Send + Sync {
    /// Length of every embedding this backend returns.
    fn embed_dim(&self) -> usize;

    /// Side length of the square images it accepts.
    fn input_size(&self) -> usize;

    /// Number of selectable layers, if the backend has any.
    fn layer_count(&self) -> Option<usize> {
        None
    }

    fn embed(&self, img: &ImageTensor) -> Result<Embedding>;

    /// Embeds several images at once. Results equal mapping [`Backend::embed`]
    /// over `imgs`, up to floating-point reassociation.
    fn embed_batch(&self, imgs: &[ImageTensor]) -> Result<Vec<Embedding>> {
        imgs.iter().map(|img| self.embed(img)).collect()
    }

    fn check_input(&self, img: &ImageTensor) -> Result<()> {
        let s = self.input_size();
        if img.height() != s || img.width() != s || img.channels() != 3 {
            return Err(Error::ShapeMismatch {
                expected: format!("{s}x{s}x3"),
                actual: img.shape_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Spectral,
    Vit,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Spectral => "spectral",
            BackendKind::Vit => "vit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    /// Transformer block counted from 1; 0 selects the token embeddings.
    /// Ignored by the spectral reference.
    pub layer: usize,
    pub bundle: Option<PathBuf>,
    /// Expected input side; must agree with the bundle for `vit`.
    pub input_size: usize,
}

impl BackendDescriptor {
    pub fn spectral(input_size: usize) -> Self {
        Self {
            kind: BackendKind::Spectral,
            layer: DEFAULT_LAYER,
            bundle: None,
            input_size,
        }
    }

    pub fn vit(bundle: impl Into<PathBuf>, layer: usize, input_size: usize) -> Self {
        Self {
            kind: BackendKind::Vit,
            layer,
            bundle: Some(bundle.into()),
            input_size,
        }
    }

    pub fn with_layer(&self, layer: usize) -> Self {
        Self {
            layer,
            ..self.clone()
        }
    }
}

/// An opened backend together with the descriptor it was opened from.
pub struct BackendHandle {
    descriptor: BackendDescriptor,
    backend: Box<dyn Backend>,
}

impl BackendHandle {
    pub fn new(descriptor: BackendDescriptor, backend: Box<dyn Backend>) -> Self {
        Self {
            descriptor,
            backend,
        }
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    pub fn backend(&self) -> &dyn Backend {
        &*self.backend
    }
}

impl std::fmt::Debug for BackendHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendHandle")
            .field("descriptor", &self.descriptor)
            .field("embed_dim", &self.backend.embed_dim())
            .finish()
    }
}

impl std::ops::Deref for BackendHandle {
    type Target = dyn Backend;

    fn deref(&self) -> &Self::Target {
        &*self.backend
    }
}

pub fn open_backend(desc: &BackendDescriptor) -> Result<BackendHandle> {
    Ok(BackendHandle::new(desc.clone(), open_backend_inner(desc)?))
}

fn open_backend_inner(desc: &BackendDescriptor) -> Result<Box<dyn Backend>> {
    match desc.kind {
        BackendKind::Spectral => Ok(Box::new(SpectralReference::new(desc.input_size)?)),
        BackendKind::Vit => {
            let dir = desc.bundle.as_ref().ok_or_else(|| {
                Error::Config("the vit backend requires a bundle directory".into())
            })?;
            let bundle = ModelBundle::load(dir)?;
            if bundle.metadata.input_size != desc.input_size {
                return Err(Error::Config(format!(
                    "bundle input size {} does not match preprocessing target {}",
                    bundle.metadata.input_size, desc.input_size
                )));
            }
            Ok(Box::new(VitBackend::load(&bundle, desc.layer)?))
        }
    }
}
