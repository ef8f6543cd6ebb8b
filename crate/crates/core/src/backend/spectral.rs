//! Weight-free reference embedding built from local spectra.
//!
//! The image is cut into non-overlapping `8 x 8` tiles. For channel `c` and
//! tile `t` (row-major), the unnormalized tile DFT `D(u, v)` is taken and its
//! non-DC bins are split into four equal-width radial bands over
//! `[0, sqrt(2)/2]`: bin `(u, v)` falls in band
//! `min(floor(4 * r(u, v) / (sqrt(2)/2)), 3)`, with `r` the radial frequency
//! under the signed `k/8` convention. Feature `(c, t, b)` is
//! `sum_{(u,v) in b} |D(u, v)|^2 / 8^4`, so by Parseval the four bands of a
//! tile sum to the tile's pixel variance. The vector lists features channel-major,
//! then tile, then band, and ends with the three channel means:
//! `dim = 3 * (S/8)^2 * 4 + 3` for an `S x S` input (9411 at `S = 224`).
//!
//! Energies are kept linear on purpose. An additive perturbation cross-couples
//! with existing content in a band (`|X + D|^2 = |X|^2 + 2 Re(X conj D) + |D|^2`),
//! so images with rich high-frequency texture move further than smooth ones,
//! which is the behaviour the detector relies on. Log-scaled band energies
//! respond the other way round.

use rustfft::num_complex::Complex64;

use super::{Backend, Embedding};
use crate::error::{Error, Result};
use crate::fft::{radial_frequency, SquareFft, MAX_RADIAL_FREQUENCY};
use crate::image::ImageTensor;

pub const TILE: usize = 8;
pub const BANDS: usize = 4;
const CHANNELS: usize = 3;

pub struct SpectralReference {
    input_size: usize,
    band_of_bin: Vec<Option<usize>>,
    fft: SquareFft,
}

/// Radial band of bin `(u, v)` of a `TILE`-point grid, or `None` for DC.
pub fn band_of(u: usize, v: usize) -> Option<usize> {
    if u == 0 && v == 0 {
        return None;
    }
    let r = radial_frequency(u, v, TILE);
    Some(((BANDS as f64 * r / MAX_RADIAL_FREQUENCY).floor() as usize).min(BANDS - 1))
}

impl SpectralReference {
    pub fn new(input_size: usize) -> Result<Self> {
        if input_size == 0 || input_size % TILE != 0 {
            return Err(Error::Config(format!(
                "spectral reference needs an input size divisible by {TILE}, got {input_size}"
            )));
        }
        let band_of_bin = (0..TILE * TILE)
            .map(|i| band_of(i / TILE, i % TILE))
            .collect();
        Ok(Self {
            input_size,
            band_of_bin,
            fft: SquareFft::new(TILE),
        })
    }

    pub fn tiles_per_side(&self) -> usize {
        self.input_size / TILE
    }

    /// Offset of feature `(channel, tile, band)` in the embedding.
    pub fn feature_index(&self, channel: usize, tile: usize, band: usize) -> usize {
        let tiles = self.tiles_per_side() * self.tiles_per_side();
        (channel * tiles + tile) * BANDS + band
    }

    /// Offset of the first channel mean.
    pub fn means_offset(&self) -> usize {
        CHANNELS * self.tiles_per_side().pow(2) * BANDS
    }
}

/// Computes the reference features of a square RGB image.
pub fn spectral_reference_features(img: &ImageTensor) -> Result<Embedding> {
    if img.height() != img.width() {
        return Err(Error::ShapeMismatch {
            expected: "square image".into(),
            actual: img.shape_string(),
        });
    }
    SpectralReference::new(img.height())?.embed(img)
}

impl Backend for SpectralReference {
    fn embed_dim(&self) -> usize {
        self.means_offset() + CHANNELS
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn embed(&self, img: &ImageTensor) -> Result<Embedding> {
        self.check_input(img)?;
        let side = self.tiles_per_side();
        let norm = 1.0 / (TILE * TILE * TILE * TILE) as f64;
        let mut out = vec![0.0; self.embed_dim()];
        let mut buf = vec![Complex64::default(); TILE * TILE];
        let mut scratch = vec![Complex64::default(); self.fft.scratch_len()];
        for ch in 0..CHANNELS {
            for ty in 0..side {
                for tx in 0..side {
                    for r in 0..TILE {
                        for c in 0..TILE {
                            let v = img.get(ty * TILE + r, tx * TILE + c, ch);
                            buf[r * TILE + c] = Complex64::new(v, 0.0);
                        }
                    }
                    // Bands are symmetric in (u, v), so orientation is irrelevant.
                    self.fft.forward_transposed(&mut buf, &mut scratch);
                    let base = self.feature_index(ch, ty * side + tx, 0);
                    for (z, band) in buf.iter().zip(&self.band_of_bin) {
                        if let Some(b) = band {
                            out[base + b] += z.norm_sqr() * norm;
                        }
                    }
                }
            }
        }
        let offset = self.means_offset();
        out[offset..].copy_from_slice(&img.channel_means());
        Embedding::new(out)
    }
}
