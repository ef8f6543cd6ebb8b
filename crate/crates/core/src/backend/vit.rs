//! Native forward pass of a CLIP-style vision transformer.
//!
//! Only the blocks up to the requested layer are loaded and evaluated. All
//! arithmetic is `f32`; weights stored as `f16`/`bf16` are widened on load.

use std::fs;

use safetensors::{Dtype, SafeTensors};

use super::bundle::{Activation, BundleMetadata, HiddenStateNorm, ModelBundle};
use super::{Backend, Embedding};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

struct Linear {
    /// `out x in`, row-major (PyTorch layout).
    weight: Vec<f32>,
    bias: Vec<f32>,
    inputs: usize,
    outputs: usize,
}

struct LayerNorm {
    weight: Vec<f32>,
    bias: Vec<f32>,
}

struct Block {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

pub struct VitBackend {
    meta: BundleMetadata,
    layer: usize,
    patch_weight: Linear,
    class_embedding: Vec<f32>,
    position_embedding: Vec<f32>,
    pre_norm: Option<LayerNorm>,
    blocks: Vec<Block>,
    post_norm: Option<LayerNorm>,
}

struct Tensors<'a> {
    st: SafeTensors<'a>,
    prefix: &'a str,
    path: &'a std::path::Path,
}

impl Tensors<'_> {
    fn err(&self, reason: String) -> Error {
        Error::BundleLoad {
            path: self.path.to_path_buf(),
            reason,
        }
    }

    fn has(&self, name: &str) -> bool {
        self.st.tensor(&format!("{}{name}", self.prefix)).is_ok()
    }

    fn get(&self, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
        let full = format!("{}{name}", self.prefix);
        let view = self
            .st
            .tensor(&full)
            .map_err(|e| self.err(format!("{full}: {e}")))?;
        if view.shape() != shape {
            return Err(self.err(format!(
                "{full}: expected shape {shape:?}, found {:?}",
                view.shape()
            )));
        }
        let bytes = view.data();
        let values: Vec<f32> = match view.dtype() {
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            Dtype::F16 => bytes
                .chunks_exact(2)
                .map(|b| half::f16::from_le_bytes([b[0], b[1]]).to_f32())
                .collect(),
            Dtype::BF16 => bytes
                .chunks_exact(2)
                .map(|b| half::bf16::from_le_bytes([b[0], b[1]]).to_f32())
                .collect(),
            other => return Err(self.err(format!("{full}: unsupported dtype {other:?}"))),
        };
        Ok(values)
    }

    fn linear(&self, name: &str, outputs: usize, inputs: usize) -> Result<Linear> {
        Ok(Linear {
            weight: self.get(&format!("{name}.weight"), &[outputs, inputs])?,
            bias: self.get(&format!("{name}.bias"), &[outputs])?,
            inputs,
            outputs,
        })
    }

    fn layer_norm(&self, name: &str, dim: usize) -> Result<LayerNorm> {
        Ok(LayerNorm {
            weight: self.get(&format!("{name}.weight"), &[dim])?,
            bias: self.get(&format!("{name}.bias"), &[dim])?,
        })
    }
}

impl VitBackend {
    /// Loads the weights needed to produce hidden state `layer`.
    pub fn load(bundle: &ModelBundle, layer: usize) -> Result<Self> {
        let meta = bundle.metadata.clone();
        if layer > meta.layer_count {
            return Err(Error::LayerOutOfRange {
                layer,
                layer_count: meta.layer_count,
            });
        }
        let path = bundle.weights_path();
        let bytes = fs::read(&path).map_err(|e| Error::BundleLoad {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::BundleLoad {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let t = Tensors {
            st,
            prefix: &meta.tensor_prefix,
            path: &path,
        };
        let d = meta.embed_dim;
        let p = meta.patch_size;
        let patch = t.get("embeddings.patch_embedding.weight", &[d, 3, p, p])?;
        let patch_weight = Linear {
            weight: patch,
            bias: vec![0.0; d],
            inputs: 3 * p * p,
            outputs: d,
        };
        let class_embedding = t.get("embeddings.class_embedding", &[d])?;
        let position_embedding = t.get(
            "embeddings.position_embedding.weight",
            &[meta.token_count(), d],
        )?;
        let pre_norm = if t.has("pre_layrnorm.weight") {
            Some(t.layer_norm("pre_layrnorm", d)?)
        } else {
            None
        };
        let mut blocks = Vec::with_capacity(layer);
        for i in 0..layer {
            let n = |s: &str| format!("encoder.layers.{i}.{s}");
            blocks.push(Block {
                ln1: t.layer_norm(&n("layer_norm1"), d)?,
                q: t.linear(&n("self_attn.q_proj"), d, d)?,
                k: t.linear(&n("self_attn.k_proj"), d, d)?,
                v: t.linear(&n("self_attn.v_proj"), d, d)?,
                out: t.linear(&n("self_attn.out_proj"), d, d)?,
                ln2: t.layer_norm(&n("layer_norm2"), d)?,
                fc1: t.linear(&n("mlp.fc1"), meta.mlp_dim, d)?,
                fc2: t.linear(&n("mlp.fc2"), d, meta.mlp_dim)?,
            });
        }
        let post_norm = match meta.hidden_state_norm {
            HiddenStateNorm::PostLayernorm => Some(t.layer_norm("post_layernorm", d)?),
            HiddenStateNorm::None => None,
        };
        Ok(Self {
            meta,
            layer,
            patch_weight,
            class_embedding,
            position_embedding,
            pre_norm,
            blocks,
            post_norm,
        })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn metadata(&self) -> &BundleMetadata {
        &self.meta
    }

    /// Normalized pixels rearranged into one row per patch, in the
    /// `(channel, row, col)` order of the patch convolution kernel.
    fn patch_rows(&self, img: &ImageTensor, out: &mut Vec<f32>) {
        let p = self.meta.patch_size;
        let side = self.meta.patches_per_side();
        for pr in 0..side {
            for pc in 0..side {
                for ch in 0..3 {
                    let mean = self.meta.image_mean[ch];
                    let std = self.meta.image_std[ch];
                    for r in 0..p {
                        for c in 0..p {
                            let v = img.get(pr * p + r, pc * p + c, ch);
                            out.push(((v - mean) / std) as f32);
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, imgs: &[ImageTensor]) -> Result<Vec<Embedding>> {
        for img in imgs {
            self.check_input(img)?;
        }
        if imgs.is_empty() {
            return Ok(Vec::new());
        }
        let d = self.meta.embed_dim;
        let tokens = self.meta.token_count();
        let patches = tokens - 1;
        let batch = imgs.len();
        let rows = batch * tokens;

        let mut pixels = Vec::with_capacity(batch * patches * self.patch_weight.inputs);
        for img in imgs {
            self.patch_rows(img, &mut pixels);
        }
        let mut patch_emb = vec![0.0f32; batch * patches * d];
        self.patch_weight
            .apply(&pixels, batch * patches, &mut patch_emb);

        let mut hidden = vec![0.0f32; rows * d];
        for b in 0..batch {
            for t in 0..tokens {
                let dst = &mut hidden[(b * tokens + t) * d..][..d];
                let pos = &self.position_embedding[t * d..][..d];
                let src = if t == 0 {
                    &self.class_embedding[..]
                } else {
                    &patch_emb[(b * patches + t - 1) * d..][..d]
                };
                for ((o, s), p) in dst.iter_mut().zip(src).zip(pos) {
                    *o = s + p;
                }
            }
        }
        let eps = self.meta.layer_norm_eps as f32;
        if let Some(ln) = &self.pre_norm {
            ln.apply_in_place(&mut hidden, d, eps);
        }

        let mut normed = vec![0.0f32; rows * d];
        let mut q = vec![0.0f32; rows * d];
        let mut k = vec![0.0f32; rows * d];
        let mut v = vec![0.0f32; rows * d];
        let mut ctx = vec![0.0f32; rows * d];
        let mut proj = vec![0.0f32; rows * d];
        let mut mlp = vec![0.0f32; rows * self.meta.mlp_dim];
        let mut scores = vec![0.0f32; tokens * tokens];
        for block in &self.blocks {
            block.ln1.apply(&hidden, &mut normed, d, eps);
            block.q.apply(&normed, rows, &mut q);
            block.k.apply(&normed, rows, &mut k);
            block.v.apply(&normed, rows, &mut v);
            for b in 0..batch {
                let off = b * tokens * d;
                self.attention(
                    &q[off..off + tokens * d],
                    &k[off..off + tokens * d],
                    &v[off..off + tokens * d],
                    &mut ctx[off..off + tokens * d],
                    &mut scores,
                );
            }
            block.out.apply(&ctx, rows, &mut proj);
            add_assign(&mut hidden, &proj);

            block.ln2.apply(&hidden, &mut normed, d, eps);
            block.fc1.apply(&normed, rows, &mut mlp);
            match self.meta.hidden_act {
                Activation::QuickGelu => mlp.iter_mut().for_each(|x| *x *= sigmoid(1.702 * *x)),
                Activation::Gelu => mlp.iter_mut().for_each(|x| {
                    *x = 0.5 * *x * (1.0 + libm::erff(*x * std::f32::consts::FRAC_1_SQRT_2))
                }),
            }
            block.fc2.apply(&mlp, rows, &mut proj);
            add_assign(&mut hidden, &proj);
        }

        let cls = self.meta.cls_token_index;
        imgs.iter()
            .enumerate()
            .map(|(b, _)| {
                let mut row = hidden[(b * tokens + cls) * d..][..d].to_vec();
                if let Some(ln) = &self.post_norm {
                    ln.apply_in_place(&mut row, d, eps);
                }
                Embedding::new(row.into_iter().map(f64::from).collect())
            })
            .collect()
    }

    /// Multi-head self-attention over one image's tokens.
    fn attention(&self, q: &[f32], k: &[f32], v: &[f32], ctx: &mut [f32], scores: &mut [f32]) {
        let d = self.meta.embed_dim;
        let heads = self.meta.num_heads;
        let hd = d / heads;
        let t = self.meta.token_count();
        let scale = (hd as f32).powf(-0.5);
        for h in 0..heads {
            let o = h * hd;
            // scores = scale * Q_h K_h^T
            unsafe {
                matrixmultiply::sgemm(
                    t,
                    hd,
                    t,
                    scale,
                    q[o..].as_ptr(),
                    d as isize,
                    1,
                    k[o..].as_ptr(),
                    1,
                    d as isize,
                    0.0,
                    scores.as_mut_ptr(),
                    t as isize,
                    1,
                );
            }
            for row in scores.chunks_exact_mut(t) {
                let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                let inv = 1.0 / sum;
                row.iter_mut().for_each(|x| *x *= inv);
            }
            // ctx_h = scores V_h
            unsafe {
                matrixmultiply::sgemm(
                    t,
                    t,
                    hd,
                    1.0,
                    scores.as_ptr(),
                    t as isize,
                    1,
                    v[o..].as_ptr(),
                    d as isize,
                    1,
                    0.0,
                    ctx[o..].as_mut_ptr(),
                    d as isize,
                    1,
                );
            }
        }
    }
}

impl Linear {
    /// `out = x W^T + b` for `rows` input rows.
    fn apply(&self, x: &[f32], rows: usize, out: &mut [f32]) {
        assert!(x.len() >= rows * self.inputs && out.len() >= rows * self.outputs);
        for row in out[..rows * self.outputs].chunks_exact_mut(self.outputs) {
            row.copy_from_slice(&self.bias);
        }
        // SAFETY: the asserts above bound every access made by sgemm.
        unsafe {
            matrixmultiply::sgemm(
                rows,
                self.inputs,
                self.outputs,
                1.0,
                x.as_ptr(),
                self.inputs as isize,
                1,
                self.weight.as_ptr(),
                1,
                self.inputs as isize,
                1.0,
                out.as_mut_ptr(),
                self.outputs as isize,
                1,
            );
        }
    }
}

impl LayerNorm {
    fn apply(&self, x: &[f32], out: &mut [f32], dim: usize, eps: f32) {
        out.copy_from_slice(x);
        self.apply_in_place(out, dim, eps);
    }

    fn apply_in_place(&self, x: &mut [f32], dim: usize, eps: f32) {
        for row in x.chunks_exact_mut(dim) {
            let mean = row.iter().sum::<f32>() / dim as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / dim as f32;
            let inv = 1.0 / (var + eps).sqrt();
            for ((v, w), b) in row.iter_mut().zip(&self.weight).zip(&self.bias) {
                *v = (*v - mean) * inv * w + b;
            }
        }
    }
}

fn add_assign(acc: &mut [f32], x: &[f32]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

impl Backend for VitBackend {
    fn embed_dim(&self) -> usize {
        self.meta.embed_dim
    }

    fn input_size(&self) -> usize {
        self.meta.input_size
    }

    fn layer_count(&self) -> Option<usize> {
        Some(self.meta.layer_count)
    }

    fn embed(&self, img: &ImageTensor) -> Result<Embedding> {
        Ok(self
            .forward(std::slice::from_ref(img))?
            .pop()
            .expect("one embedding per image"))
    }

    fn embed_batch(&self, imgs: &[ImageTensor]) -> Result<Vec<Embedding>> {
        self.forward(imgs)
    }
}
