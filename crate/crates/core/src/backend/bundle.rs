//! Model bundle layout.
//!
//! A bundle is a directory holding a safetensors weights file and a
//! `metadata.json`:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "architecture": "clip-vit",
//!   "weights_file": "model.safetensors",
//!   "tensor_prefix": "vision_model.",
//!   "input_size": 224,
//!   "patch_size": 14,
//!   "image_mean": [0.48145466, 0.4578275, 0.40821073],
//!   "image_std": [0.26862954, 0.26130258, 0.27577711],
//!   "layer_count": 24,
//!   "embed_dim": 1024,
//!   "num_heads": 16,
//!   "mlp_dim": 4096,
//!   "cls_token_index": 0,
//!   "layer_norm_eps": 1e-5,
//!   "hidden_act": "quick_gelu",
//!   "hidden_state_norm": "none"
//! }
//! ```
//!
//! Tensor names follow the Hugging Face `CLIPVisionModel` state dict below
//! `tensor_prefix`. Hidden state 0 is the token embedding after the
//! pre-transformer layer norm; hidden state `l` is the residual stream after
//! block `l`. `hidden_state_norm` records whether the exported CLS vector is
//! taken raw (`"none"`) or after the final `post_layernorm`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METADATA_FILE: &str = "metadata.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    QuickGelu,
    Gelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenStateNorm {
    None,
    PostLayernorm,
}

fn default_weights_file() -> String {
    "model.safetensors".into()
}

fn default_prefix() -> String {
    "vision_model.".into()
}

fn default_eps() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub format_version: u32,
    pub architecture: String,
    #[serde(default = "default_weights_file")]
    pub weights_file: String,
    #[serde(default = "default_prefix")]
    pub tensor_prefix: String,
    pub input_size: usize,
    pub patch_size: usize,
    pub image_mean: [f64; 3],
    pub image_std: [f64; 3],
    pub layer_count: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub mlp_dim: usize,
    #[serde(default)]
    pub cls_token_index: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    pub hidden_act: Activation,
    pub hidden_state_norm: HiddenStateNorm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl BundleMetadata {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        if self.architecture != "clip-vit" {
            return Err(format!("unsupported architecture {:?}", self.architecture));
        }
        if self.patch_size == 0 || self.input_size % self.patch_size != 0 {
            return Err(format!(
                "patch size {} does not tile input size {}",
                self.patch_size, self.input_size
            ));
        }
        if self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return Err(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.cls_token_index >= self.token_count() {
            return Err(format!(
                "cls_token_index {} out of range",
                self.cls_token_index
            ));
        }
        if self.image_std.iter().any(|&s| s <= 0.0) {
            return Err("image_std entries must be positive".into());
        }
        Ok(())
    }

    pub fn patches_per_side(&self) -> usize {
        self.input_size / self.patch_size
    }

    /// Patch tokens plus the class token.
    pub fn token_count(&self) -> usize {
        self.patches_per_side().pow(2) + 1
    }
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub dir: PathBuf,
    pub metadata: BundleMetadata,
}

impl ModelBundle {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let err = |reason: String| Error::BundleLoad {
            path: dir.to_path_buf(),
            reason,
        };
        let text = fs::read_to_string(dir.join(METADATA_FILE))
            .map_err(|e| err(format!("{METADATA_FILE}: {e}")))?;
        let metadata: BundleMetadata =
            serde_json::from_str(&text).map_err(|e| err(format!("{METADATA_FILE}: {e}")))?;
        metadata.validate().map_err(err)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metadata,
        })
    }

    pub fn weights_path(&self) -> PathBuf {
        self.dir.join(&self.metadata.weights_file)
    }
}
