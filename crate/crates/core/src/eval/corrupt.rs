//! Image corruptions for robustness studies.
//!
//! | kind            | level 1 | level 2 | level 3 | parameter                 |
//! |-----------------|---------|---------|---------|---------------------------|
//! | `gaussian_blur` | 1       | 2       | 3       | sigma, pixels             |
//! | `gaussian_noise`| 0.02    | 0.05    | 0.10    | sigma, `[0, 1]` units     |
//! | `jpeg`          | 90      | 70      | 50      | encoder quality           |
//! | `center_crop`   | 0.9     | 0.8     | 0.7     | retained side fraction    |
//!
//! Level 0 means "custom parameter" and exists for tests and ad-hoc runs.

use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use ::image::codecs::jpeg::JpegEncoder;
use ::image::ImageFormat;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize, ImageTensor, ResizeFilter};
use crate::rng::{Domain, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianBlur,
    GaussianNoise,
    Jpeg,
    CenterCrop,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 4] = [
        CorruptionKind::GaussianBlur,
        CorruptionKind::GaussianNoise,
        CorruptionKind::Jpeg,
        CorruptionKind::CenterCrop,
    ];

    fn levels(self) -> [f64; 3] {
        match self {
            CorruptionKind::GaussianBlur => [1.0, 2.0, 3.0],
            CorruptionKind::GaussianNoise => [0.02, 0.05, 0.10],
            CorruptionKind::Jpeg => [90.0, 70.0, 50.0],
            CorruptionKind::CenterCrop => [0.9, 0.8, 0.7],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianBlur => "gaussian_blur",
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::Jpeg => "jpeg",
            CorruptionKind::CenterCrop => "center_crop",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown corruption {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub level: u8,
    pub param: f64,
}

impl CorruptionSpec {
    /// One of the three standard severities, `level` in `1..=3`.
    pub fn standard(kind: CorruptionKind, level: u8) -> Result<Self> {
        if !(1..=3).contains(&level) {
            return Err(Error::Config(format!(
                "corruption level must be 1..=3, got {level}"
            )));
        }
        Ok(Self {
            kind,
            level,
            param: kind.levels()[level as usize - 1],
        })
    }

    pub fn custom(kind: CorruptionKind, param: f64) -> Self {
        Self {
            kind,
            level: 0,
            param,
        }
    }

    /// Every kind at every standard level.
    pub fn standard_grid() -> Vec<CorruptionSpec> {
        CorruptionKind::ALL
            .into_iter()
            .flat_map(|k| (1..=3).map(move |l| CorruptionSpec::standard(k, l).unwrap()))
            .collect()
    }
}

impl FromStr for CorruptionSpec {
    type Err = Error;

    /// Parses `kind:level`, e.g. `jpeg:2`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, level) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("expected kind:level, got {s:?}")))?;
        let level: u8 = level
            .parse()
            .map_err(|_| Error::Config(format!("bad corruption level in {s:?}")))?;
        CorruptionSpec::standard(kind.parse()?, level)
    }
}

/// Applies `spec`, keeping the image geometry. Noise draws are keyed by
/// `(seed, image_index)`.
pub fn apply_corruption(
    img: &ImageTensor,
    spec: &CorruptionSpec,
    seed: u64,
    image_index: u64,
) -> ImageTensor {
    match spec.kind {
        CorruptionKind::GaussianBlur => gaussian_blur(img, spec.param),
        CorruptionKind::GaussianNoise => gaussian_noise(img, spec.param, seed, image_index),
        CorruptionKind::Jpeg => jpeg_round_trip(img, spec.param.round().clamp(1.0, 100.0) as u8)
            .expect("in-memory JPEG round trip"),
        CorruptionKind::CenterCrop => center_crop(img, spec.param),
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Mirror index without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

pub fn gaussian_blur(img: &ImageTensor, sigma: f64) -> ImageTensor {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let mut tmp = img.clone();
    for r in 0..h {
        for c in 0..w {
            for z in 0..ch {
                let v = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * img.get(r, reflect(c as isize + i as isize - radius, w), z))
                    .sum();
                tmp.set(r, c, z, v);
            }
        }
    }
    let mut out = tmp.clone();
    for r in 0..h {
        for c in 0..w {
            for z in 0..ch {
                let v = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * tmp.get(reflect(r as isize + i as isize - radius, h), c, z))
                    .sum();
                out.set(r, c, z, v);
            }
        }
    }
    out
}

pub fn gaussian_noise(img: &ImageTensor, sigma: f64, seed: u64, image_index: u64) -> ImageTensor {
    let mut out = img.clone();
    if sigma <= 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut rng = StreamKey::new(seed, Domain::CorruptionNoise, image_index).rng();
    for v in out.data_mut() {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
    }
    out
}

/// Encodes to baseline JPEG at `quality` and decodes again.
pub fn jpeg_round_trip(img: &ImageTensor, quality: u8) -> Result<ImageTensor> {
    let rgb = img.to_rgb8();
    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, quality)
        .encode_image(&rgb)
        .map_err(|e| Error::Encode(e.to_string()))?;
    let decoded = ::image::load(Cursor::new(bytes), ImageFormat::Jpeg)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(ImageTensor::from_dynamic(&decoded))
}

/// Keeps the central `fraction` of each side and resizes back.
pub fn center_crop(img: &ImageTensor, fraction: f64) -> ImageTensor {
    if fraction >= 1.0 {
        return img.clone();
    }
    let (h, w) = (img.height(), img.width());
    let ch = ((h as f64 * fraction).round() as usize).clamp(1, h);
    let cw = ((w as f64 * fraction).round() as usize).clamp(1, w);
    let (r0, c0) = ((h - ch) / 2, (w - cw) / 2);
    let cropped =
        ImageTensor::from_fn(ch, cw, img.channels(), |r, c, z| img.get(r0 + r, c0 + c, z))
            .expect("crop of a valid image is valid");
    resize(&cropped, h, w, ResizeFilter::Bilinear)
}

pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    10.0 * (1.0 / mse).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noise_image(n: usize, seed: u64) -> ImageTensor {
        let mut rng = StreamKey::new(seed, Domain::Fixture, 0).rng();
        ImageTensor::from_fn(n, n, 3, |_, _, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn standard_levels_increase_in_severity() {
        let p = |k, l| CorruptionSpec::standard(k, l).unwrap().param;
        for l in 1..3 {
            assert!(p(CorruptionKind::GaussianBlur, l) < p(CorruptionKind::GaussianBlur, l + 1));
            assert!(p(CorruptionKind::GaussianNoise, l) < p(CorruptionKind::GaussianNoise, l + 1));
            assert!(p(CorruptionKind::Jpeg, l) > p(CorruptionKind::Jpeg, l + 1));
            assert!(p(CorruptionKind::CenterCrop, l) > p(CorruptionKind::CenterCrop, l + 1));
        }
        assert!(CorruptionSpec::standard(CorruptionKind::Jpeg, 4).is_err());
        assert_eq!(CorruptionSpec::standard_grid().len(), 12);
    }

    #[test]
    fn parses_kind_level() {
        let s: CorruptionSpec = "jpeg:3".parse().unwrap();
        assert_eq!(s.param, 50.0);
        assert!("blur:1".parse::<CorruptionSpec>().is_err());
        assert!("jpeg".parse::<CorruptionSpec>().is_err());
    }

    #[test]
    fn vanishing_blur_is_identity() {
        let img = noise_image(16, 1);
        let out = gaussian_blur(&img, 0.0);
        assert_eq!(out, img);
        // A tiny sigma has a single-tap kernel.
        let out = gaussian_blur(&img, 1e-3);
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn blur_preserves_constants() {
        let img = ImageTensor::filled(12, 9, 3, 0.4).unwrap();
        let out = gaussian_blur(&img, 2.0);
        assert!(out.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn full_crop_is_identity() {
        let img = noise_image(20, 2);
        assert_eq!(center_crop(&img, 1.0), img);
        let out = center_crop(&img, 0.7);
        assert!(out.same_shape(&img));
    }

    #[test]
    fn lower_jpeg_quality_is_lossier() {
        let img = noise_image(64, 3);
        let q90 = psnr(&img, &jpeg_round_trip(&img, 90).unwrap());
        let q50 = psnr(&img, &jpeg_round_trip(&img, 50).unwrap());
        assert!(q50 < q90, "q50 {q50} vs q90 {q90}");
    }

    #[test]
    fn noise_is_keyed_and_clamped() {
        let img = ImageTensor::filled(8, 8, 3, 0.5).unwrap();
        let a = gaussian_noise(&img, 0.1, 7, 0);
        assert_eq!(a, gaussian_noise(&img, 0.1, 7, 0));
        assert_ne!(a, gaussian_noise(&img, 0.1, 7, 1));
        let b = gaussian_noise(&img, 5.0, 7, 0);
        assert!(b.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn reflect_borders() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(3, 5), 3);
        assert_eq!(reflect(-3, 1), 0);
    }
}
