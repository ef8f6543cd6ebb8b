//! Synthetic real/fake image pairs for offline evaluation.
//!
//! A "real" image is a smooth `1/f` random field (a crude stand-in for
//! natural-image statistics) plus broadband white-noise texture. Its "fake"
//! twin is the same image with every frequency above a radial cutoff removed,
//! mimicking the band-limited high frequencies of generated images.

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use crate::error::Result;
use crate::fft::{radial_frequency, SquareFft};
use crate::image::ImageTensor;
use crate::manifest::{DatasetManifest, Label, ManifestEntry};
use crate::rng::{Domain, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSpec {
    pub size: usize,
    pub base_std: f64,
    pub texture_std: f64,
    /// Radial frequency above which fakes carry no energy.
    pub cutoff: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            size: 224,
            base_std: 0.12,
            texture_std: 0.08,
            cutoff: 0.35,
            seed: 2024,
        }
    }
}

pub const FAKE_GENERATOR: &str = "lowpass";

fn white(key: StreamKey, n: usize) -> Vec<f64> {
    let mut rng = key.rng();
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Multiplies the spectrum of a square plane by `gain(r)`.
fn radial_filter(plane: &[f64], fft: &SquareFft, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = fft.size();
    let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut scratch = vec![Complex64::default(); fft.scratch_len()];
    fft.forward_transposed(&mut buf, &mut scratch);
    for (i, z) in buf.iter_mut().enumerate() {
        *z *= gain(radial_frequency(i / n, i % n, n));
    }
    fft.inverse_transposed(&mut buf, &mut scratch);
    let norm = 1.0 / (n * n) as f64;
    buf.iter().map(|z| z.re * norm).collect()
}

/// Zeroes every frequency with radial frequency above `cutoff`.
pub fn low_pass(img: &ImageTensor, cutoff: f64) -> ImageTensor {
    assert_eq!(img.height(), img.width(), "low_pass needs a square image");
    let fft = SquareFft::new(img.height());
    let mut out = img.clone();
    for ch in 0..img.channels() {
        let filtered = radial_filter(
            &img.plane(ch),
            &fft,
            |r| if r <= cutoff { 1.0 } else { 0.0 },
        );
        out.set_plane(ch, &filtered);
    }
    out
}

/// The `index`-th real image.
pub fn real_image(spec: &FixtureSpec, index: u64) -> ImageTensor {
    let n = spec.size;
    let fft = SquareFft::new(n);
    let key = StreamKey::new(spec.seed, Domain::Fixture, index);
    let shared = white(key.channel(3), n * n);
    let mut img = ImageTensor::filled(n, n, 3, 0.0).expect("positive size");
    for ch in 0..3 {
        let own = white(key.channel(ch as u32), n * n);
        let mixed: Vec<f64> = shared
            .iter()
            .zip(&own)
            .map(|(s, o)| 0.7 * s + 0.3 * o)
            .collect();
        let field = radial_filter(&mixed, &fft, |r| if r > 0.0 { 1.0 / r } else { 0.0 });
        let mean = field.iter().sum::<f64>() / field.len() as f64;
        let std =
            (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / field.len() as f64).sqrt();
        let texture = white(key.channel(4 + ch as u32), n * n);
        let plane: Vec<f64> = field
            .iter()
            .zip(&texture)
            .map(|(f, t)| {
                (0.5 + spec.base_std * (f - mean) / std + spec.texture_std * t).clamp(0.0, 1.0)
            })
            .collect();
        img.set_plane(ch, &plane);
    }
    img
}

/// The low-passed twin of a real image, clamped to `[0, 1]`.
pub fn fake_image(spec: &FixtureSpec, real: &ImageTensor) -> ImageTensor {
    let mut fake = low_pass(real, spec.cutoff);
    fake.clamp_unit();
    fake
}

/// Writes `count` real and `count` fake 16-bit PNGs under `dir` plus a
/// `manifest.jsonl`, returning the manifest path.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec, count: usize) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("real"))?;
    fs::create_dir_all(dir.join(FAKE_GENERATOR))?;
    let mut entries = Vec::with_capacity(2 * count);
    let mut fakes = Vec::with_capacity(count);
    for i in 0..count {
        let real = real_image(spec, i as u64);
        let fake = fake_image(spec, &real);
        let real_path = PathBuf::from(format!("real/{i:04}.png"));
        let fake_path = PathBuf::from(format!("{FAKE_GENERATOR}/{i:04}.png"));
        save_png16(&real, &dir.join(&real_path))?;
        save_png16(&fake, &dir.join(&fake_path))?;
        entries.push(ManifestEntry {
            path: real_path,
            label: Label::Real,
            generator: "real".into(),
        });
        fakes.push(ManifestEntry {
            path: fake_path,
            label: Label::Fake,
            generator: FAKE_GENERATOR.into(),
        });
    }
    entries.extend(fakes);
    let manifest_path = dir.join("manifest.jsonl");
    DatasetManifest::new(entries).write(&manifest_path)?;
    Ok(manifest_path)
}

pub fn save_png16(img: &ImageTensor, path: &Path) -> Result<()> {
    img.to_rgb16()
        .save_with_format(path, ::image::ImageFormat::Png)
        .map_err(|e| crate::error::Error::Encode(e.to_string()))
}
