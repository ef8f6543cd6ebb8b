//! Run configuration, layered as defaults <- config file <- command-line flags.
//!
//! Config files are a single JSON object whose keys are the long flag names,
//! e.g. `{"lambda": 0.001, "patch-size": 28}`. The `SPECDETECT_BUNDLE`
//! environment variable supplies the bundle path when neither layer does.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{BackendDescriptor, BackendKind, DEFAULT_LAYER};
use crate::detector::ScoreOptions;
use crate::error::{Error, Result};
use crate::image::{PreprocessSpec, ResizeFilter};
use crate::perturb::PerturbConfig;

pub const BUNDLE_ENV: &str = "SPECDETECT_BUNDLE";

/// Fully resolved settings for one run; echoed into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub backend: BackendKind,
    pub bundle: Option<PathBuf>,
    pub layer: usize,
    pub lambda: f64,
    pub tau: f64,
    pub patch_size: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub target_size: usize,
    pub resize_filter: ResizeFilter,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            backend: BackendKind::Spectral,
            bundle: None,
            layer: DEFAULT_LAYER,
            lambda: 0.01,
            tau: 0.5,
            patch_size: 14,
            batch_size: 8,
            seed: 0,
            workers: 1,
            out: None,
            target_size: 224,
            resize_filter: ResizeFilter::Bilinear,
        }
    }
}

/// A partial configuration; unset fields defer to the layer below.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigLayer {
    pub manifest: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub bundle: Option<PathBuf>,
    pub layer: Option<usize>,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub patch_size: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub target_size: Option<usize>,
    pub resize_filter: Option<ResizeFilter>,
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

macro_rules! overlay {
    ($cfg:ident, $layer:ident, [$($field:ident),*]) => {
        $(if let Some(v) = $layer.$field.clone() { $cfg.$field = v; })*
    };
}

impl RunConfig {
    /// Applies `layers` in order, later ones winning.
    pub fn resolve(layers: &[&ConfigLayer], env_bundle: Option<PathBuf>) -> Result<Self> {
        let mut cfg = RunConfig {
            bundle: env_bundle,
            ..Default::default()
        };
        for layer in layers {
            overlay!(
                cfg,
                layer,
                [
                    backend,
                    layer,
                    lambda,
                    tau,
                    patch_size,
                    batch_size,
                    seed,
                    workers,
                    target_size,
                    resize_filter
                ]
            );
            if layer.manifest.is_some() {
                cfg.manifest = layer.manifest.clone();
            }
            if layer.bundle.is_some() {
                cfg.bundle = layer.bundle.clone();
            }
            if layer.out.is_some() {
                cfg.out = layer.out.clone();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.perturb_config().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch-size must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.target_size == 0 || self.target_size % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "patch-size {} does not tile target-size {}",
                self.patch_size, self.target_size
            )));
        }
        if self.backend == BackendKind::Vit && self.bundle.is_none() {
            return Err(Error::Config(format!(
                "the vit backend needs --bundle or {BUNDLE_ENV}"
            )));
        }
        Ok(())
    }

    pub fn perturb_config(&self) -> PerturbConfig {
        PerturbConfig {
            lambda: self.lambda,
            tau: self.tau,
            patch_size: self.patch_size,
            seed: self.seed,
        }
    }

    pub fn preprocess_spec(&self) -> PreprocessSpec {
        PreprocessSpec {
            target_size: self.target_size,
            filter: self.resize_filter,
        }
    }

    pub fn backend_descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            kind: self.backend,
            layer: self.layer,
            bundle: match self.backend {
                BackendKind::Vit => self.bundle.clone(),
                BackendKind::Spectral => None,
            },
            input_size: self.target_size,
        }
    }

    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            batch_size: self.batch_size,
            workers: self.workers,
            preprocess: self.preprocess_spec(),
            corruption: None,
        }
    }
}
