#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, TensorView};
use specdetect::fixture::{write_fixture, FixtureSpec};
use specdetect::ImageTensor;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// Direct O(n^4) 2-D DFT of a row-major `n x n` plane; returns (re, im) at `[u * n + v]`.
pub fn direct_dft(plane: &[f64], n: usize) -> Vec<(f64, f64)> {
    let twiddle: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let phase = -2.0 * PI * k as f64 / n as f64;
            (phase.cos(), phase.sin())
        })
        .collect();
    let mut out = vec![(0.0, 0.0); n * n];
    for u in 0..n {
        for v in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for r in 0..n {
                for c in 0..n {
                    let (cos, sin) = twiddle[(u * r + v * c) % n];
                    re += plane[r * n + c] * cos;
                    im += plane[r * n + c] * sin;
                }
            }
            out[u * n + v] = (re, im);
        }
    }
    out
}

/// Radial frequency of DFT bin `(u, v)`, written out independently of the crate.
pub fn radial(u: usize, v: usize, n: usize) -> f64 {
    let f = |k: usize| {
        if 2 * k <= n {
            k as f64 / n as f64
        } else {
            k as f64 / n as f64 - 1.0
        }
    };
    f(u).hypot(f(v))
}

pub fn uniform_image(h: usize, w: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w * 3).map(|_| rng.random::<f64>()).collect();
    ImageTensor::new(h, w, 3, data).unwrap()
}

/// Writes a fixture of `count` reals and `count` fakes at `size` into `dir`.
pub fn small_fixture(dir: &Path, count: usize, size: usize) -> PathBuf {
    let spec = FixtureSpec {
        size,
        ..Default::default()
    };
    write_fixture(dir, &spec, count).unwrap()
}

pub struct TinyVit {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub mlp: usize,
    pub input: usize,
    pub patch: usize,
}

/// Writes a randomly initialised CLIP-style bundle into `dir`.
pub fn write_random_bundle(dir: &Path, spec: &TinyVit, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.hidden;
    let tokens = (spec.input / spec.patch).pow(2) + 1;
    let mut shapes: Vec<(String, Vec<usize>)> = vec![
        (
            "embeddings.patch_embedding.weight".into(),
            vec![d, 3, spec.patch, spec.patch],
        ),
        ("embeddings.class_embedding".into(), vec![d]),
        (
            "embeddings.position_embedding.weight".into(),
            vec![tokens, d],
        ),
        ("pre_layrnorm.weight".into(), vec![d]),
        ("pre_layrnorm.bias".into(), vec![d]),
    ];
    for i in 0..spec.layers {
        let n = |s: &str| format!("encoder.layers.{i}.{s}");
        for ln in ["layer_norm1", "layer_norm2"] {
            shapes.push((n(&format!("{ln}.weight")), vec![d]));
            shapes.push((n(&format!("{ln}.bias")), vec![d]));
        }
        for proj in ["q_proj", "k_proj", "v_proj", "out_proj"] {
            shapes.push((n(&format!("self_attn.{proj}.weight")), vec![d, d]));
            shapes.push((n(&format!("self_attn.{proj}.bias")), vec![d]));
        }
        shapes.push((n("mlp.fc1.weight"), vec![spec.mlp, d]));
        shapes.push((n("mlp.fc1.bias"), vec![spec.mlp]));
        shapes.push((n("mlp.fc2.weight"), vec![d, spec.mlp]));
        shapes.push((n("mlp.fc2.bias"), vec![d]));
    }
    let buffers: Vec<(String, Vec<usize>, Vec<u8>)> = shapes
        .into_iter()
        .map(|(name, shape)| {
            let len: usize = shape.iter().product();
            let ones = name.contains("norm") && name.ends_with(".weight");
            let bytes = (0..len)
                .flat_map(|_| {
                    let v: f32 = if ones {
                        1.0
                    } else {
                        rng.random_range(-0.2..0.2)
                    };
                    v.to_le_bytes()
                })
                .collect();
            (name, shape, bytes)
        })
        .collect();
    let views: Vec<(String, TensorView)> = buffers
        .iter()
        .map(|(n, s, b)| {
            (
                n.clone(),
                TensorView::new(Dtype::F32, s.clone(), b).unwrap(),
            )
        })
        .collect();
    let bytes = safetensors::serialize(views, None::<HashMap<String, String>>).unwrap();
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("model.safetensors"), bytes).unwrap();
    let meta = serde_json::json!({
        "format_version": 1,
        "architecture": "clip-vit",
        "tensor_prefix": "",
        "input_size": spec.input,
        "patch_size": spec.patch,
        "image_mean": [0.48145466, 0.4578275, 0.40821073],
        "image_std": [0.26862954, 0.26130258, 0.27577711],
        "layer_count": spec.layers,
        "embed_dim": d,
        "num_heads": spec.heads,
        "mlp_dim": spec.mlp,
        "cls_token_index": 0,
        "hidden_act": "quick_gelu",
        "hidden_state_norm": "none"
    });
    fs::write(
        dir.join("metadata.json"),
        serde_json::to_string_pretty(&meta).unwrap(),
    )
    .unwrap();
}
