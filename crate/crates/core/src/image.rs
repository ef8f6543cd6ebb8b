//! Image ingestion and deterministic resizing to the model input geometry.

use std::path::Path;

use ::image::imageops::{self, FilterType};
use ::image::{DynamicImage, ImageFormat, ImageReader, Rgb32FImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major, channel-last pixel array.
///
/// Decoded images lie in `[0, 1]`. Perturbed images may leave that range;
/// nothing downstream clips them.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "image must be non-empty, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Dimension(format!(
                "expected 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    /// Builds an image by evaluating `f(row, col, channel)` at every pixel.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    /// Copies one channel out as a row-major plane.
    pub fn plane(&self, channel: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn set_plane(&mut self, channel: usize, plane: &[f64]) {
        assert_eq!(plane.len(), self.height * self.width);
        for (dst, &v) in self
            .data
            .iter_mut()
            .skip(channel)
            .step_by(self.channels)
            .zip(plane)
        {
            *dst = v;
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn channel_means(&self) -> Vec<f64> {
        let n = (self.height * self.width) as f64;
        let mut sums = vec![0.0; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (s, v) in sums.iter_mut().zip(px) {
                *s += v;
            }
        }
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Replicates a single-channel image to RGB; RGB images are returned as is.
    pub fn into_rgb(self) -> ImageTensor {
        if self.channels == 3 {
            return self;
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageTensor {
            channels: 3,
            data,
            ..self
        }
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub(crate) fn to_rgb32f(&self) -> Rgb32FImage {
        let rgb = self.clone().into_rgb();
        let buf = rgb.data.iter().map(|&v| v as f32).collect();
        Rgb32FImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions")
    }

    pub(crate) fn from_rgb32f(img: &Rgb32FImage) -> ImageTensor {
        let (w, h) = img.dimensions();
        ImageTensor {
            height: h as usize,
            width: w as usize,
            channels: 3,
            data: img.as_raw().iter().map(|&v| v as f64).collect(),
        }
    }

    /// Quantizes to 8 bits per channel (RGB).
    pub fn to_rgb8(&self) -> ::image::RgbImage {
        let rgb = self.clone().into_rgb();
        let buf = rgb
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        ::image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions")
    }

    /// Quantizes to 16 bits per channel (RGB).
    pub fn to_rgb16(&self) -> ::image::ImageBuffer<::image::Rgb<u16>, Vec<u16>> {
        let rgb = self.clone().into_rgb();
        let buf = rgb
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        ::image::ImageBuffer::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions")
    }

    pub fn from_dynamic(img: &DynamicImage) -> ImageTensor {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data: Vec<f64> = match img {
            DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageRgb8(_)
            | DynamicImage::ImageRgba8(_) => img
                .to_rgb8()
                .as_raw()
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect(),
            DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_) => img
                .to_rgb16()
                .as_raw()
                .iter()
                .map(|&b| b as f64 / 65535.0)
                .collect(),
            _ => img
                .to_rgb32f()
                .as_raw()
                .iter()
                .map(|&v| (v as f64).clamp(0.0, 1.0))
                .collect(),
        };
        ImageTensor {
            height: h,
            width: w,
            channels: 3,
            data,
        }
    }
}

/// Decodes a PNG, JPEG or WebP file into a `[0, 1]` RGB tensor.
///
/// Grayscale is replicated to three channels and alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::WebP) => {}
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
    let img = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(decode_err("zero-sized image".into()));
    }
    Ok(ImageTensor::from_dynamic(&img))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    #[default]
    Bilinear,
    Bicubic,
}

impl ResizeFilter {
    fn filter_type(self) -> FilterType {
        match self {
            ResizeFilter::Bilinear => FilterType::Triangle,
            ResizeFilter::Bicubic => FilterType::CatmullRom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub target_size: usize,
    pub filter: ResizeFilter,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            target_size: 224,
            filter: ResizeFilter::Bilinear,
        }
    }
}

/// Resizes to a `target_size` square RGB image without preserving aspect ratio.
///
/// An image already at the target geometry is returned unchanged, which makes
/// the operation idempotent.
pub fn preprocess(img: &ImageTensor, spec: &PreprocessSpec) -> ImageTensor {
    resize(img, spec.target_size, spec.target_size, spec.filter)
}

pub fn resize(img: &ImageTensor, height: usize, width: usize, filter: ResizeFilter) -> ImageTensor {
    let rgb = img.clone().into_rgb();
    if rgb.height == height && rgb.width == width {
        return rgb;
    }
    let resized = imageops::resize(
        &rgb.to_rgb32f(),
        width as u32,
        height as u32,
        filter.filter_type(),
    );
    let mut out = ImageTensor::from_rgb32f(&resized);
    // Cubic kernels overshoot near edges.
    out.clamp_unit();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, 3, |r, c, ch| {
            ((r * 7 + c * 13 + ch * 29) % 256) as f64 / 255.0
        })
        .unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ImageTensor::new(0, 4, 3, vec![]).is_err());
        assert!(ImageTensor::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageTensor::new(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(ImageTensor::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn identity_resize_is_bitwise() {
        let img = gradient(224, 224);
        let out = preprocess(&img, &PreprocessSpec::default());
        assert_eq!(out, img);
    }

    #[test]
    fn constant_survives_downscale() {
        let img = ImageTensor::filled(448, 448, 3, 0.5).unwrap();
        for filter in [ResizeFilter::Bilinear, ResizeFilter::Bicubic] {
            let out = preprocess(
                &img,
                &PreprocessSpec {
                    target_size: 224,
                    filter,
                },
            );
            assert_eq!((out.height(), out.width(), out.channels()), (224, 224, 3));
            assert!(out.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
        }
    }

    #[test]
    fn non_square_mean_is_preserved() {
        let img = ImageTensor::from_fn(100, 300, 3, |r, c, ch| {
            let x = (r as f64 / 99.0) * 0.6 + (c as f64 / 299.0) * 0.3 + ch as f64 * 0.03;
            x.min(1.0)
        })
        .unwrap();
        let src_mean = img.mean();
        let out = preprocess(&img, &PreprocessSpec::default());
        assert_eq!((out.height(), out.width()), (224, 224));
        assert!(((out.mean() - src_mean) / src_mean).abs() < 0.01);
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn preprocess_is_idempotent() {
        let img = gradient(97, 131);
        let spec = PreprocessSpec {
            target_size: 56,
            filter: ResizeFilter::Bicubic,
        };
        let once = preprocess(&img, &spec);
        assert_eq!(preprocess(&once, &spec), once);
    }

    #[test]
    fn grayscale_becomes_rgb() {
        let gray = ImageTensor::from_fn(2, 3, 1, |r, c, _| (r + c) as f64 / 4.0).unwrap();
        let rgb = gray.clone().into_rgb();
        assert_eq!(rgb.channels(), 3);
        assert_eq!(rgb.get(1, 2, 0), 0.75);
        assert_eq!(rgb.get(1, 2, 2), 0.75);
    }

    #[test]
    fn plane_round_trip() {
        let mut img = gradient(5, 4);
        let p = img.plane(1);
        assert_eq!(p.len(), 20);
        assert_eq!(p[6], img.get(1, 2, 1));
        let doubled: Vec<f64> = p.iter().map(|v| v * 2.0).collect();
        img.set_plane(1, &doubled);
        assert_eq!(img.get(1, 2, 1), p[6] * 2.0);
    }
}
