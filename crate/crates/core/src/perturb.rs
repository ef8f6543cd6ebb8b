//! Patchwise high-frequency perturbation.
//!
//! For each non-overlapping `P x P` patch and each channel, Gaussian noise
//! with variance `lambda` is drawn, transformed with a 2D FFT, every bin whose
//! normalized radial frequency is at or below `tau` is zeroed, and the result
//! is transformed back. The perturbed image is `x + delta`; it is never
//! clipped, since clipping would leak energy back into the suppressed band.
//!
//! Frequencies follow the usual DFT convention: bin `k` of a `P`-point axis
//! maps to `k / P` for `k <= P / 2` and `(k - P) / P` otherwise, so the radial
//! frequency tops out at `sqrt(2) / 2` on the grid corner. The DC bin is never
//! kept, so every patch of `delta` has zero mean.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{radial_frequency, Dft2};
use crate::image::ImageTensor;
use crate::rng::{Domain, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    /// Per-pixel noise variance before masking, in `[0, 1]`-pixel units squared.
    pub lambda: f64,
    /// Radial frequency threshold; bins with `r > tau` are kept.
    pub tau: f64,
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            tau: 0.5,
            patch_size: 14,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::Config(format!(
                "tau must be finite and >= 0, got {}",
                self.tau
            )));
        }
        if self.patch_size == 0 {
            return Err(Error::Config("patch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which DFT bins of a `P x P` patch survive the high-pass filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighPassMask {
    size: usize,
    kept: Vec<bool>,
}

impl HighPassMask {
    pub fn new(size: usize, tau: f64) -> Self {
        assert!(size >= 1, "patch size must be positive");
        let kept = (0..size * size)
            .map(|i| radial_frequency(i / size, i % size, size) > tau)
            .collect();
        Self { size, kept }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Whether bin `(u, v)` is kept.
    pub fn is_kept(&self, u: usize, v: usize) -> bool {
        self.kept[u * self.size + v]
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_count() as f64 / (self.size * self.size) as f64
    }

    pub fn is_empty(&self) -> bool {
        self.kept_count() == 0
    }
}

pub fn make_highpass_mask(patch_size: usize, tau: f64) -> HighPassMask {
    HighPassMask::new(patch_size, tau)
}

/// A validated [`PerturbConfig`] with its mask and FFT plans prepared.
///
/// Cheap to share across threads; every call allocates its own scratch.
pub struct Perturber {
    cfg: PerturbConfig,
    mask: HighPassMask,
    fft: Dft2,
    /// The mask indexed by transform slot.
    keep: Vec<bool>,
}

struct Scratch {
    buf: Vec<Complex64>,
    fft: Vec<Complex64>,
    plane: Vec<f64>,
}

impl Perturber {
    pub fn new(cfg: PerturbConfig) -> Result<Self> {
        cfg.validate()?;
        let mask = HighPassMask::new(cfg.patch_size, cfg.tau);
        let fft = Dft2::new(cfg.patch_size);
        let keep = (0..cfg.patch_size * cfg.patch_size)
            .map(|slot| {
                let (u, v) = fft.bin(slot);
                mask.is_kept(u, v)
            })
            .collect();
        Ok(Self {
            cfg,
            mask,
            fft,
            keep,
        })
    }

    pub fn config(&self) -> &PerturbConfig {
        &self.cfg
    }

    pub fn mask(&self) -> &HighPassMask {
        &self.mask
    }

    fn scratch(&self) -> Scratch {
        let p = self.cfg.patch_size;
        Scratch {
            buf: vec![Complex64::default(); p * p],
            fft: vec![Complex64::default(); self.fft.scratch_len()],
            plane: vec![0.0; p * p],
        }
    }

    /// Draws `lambda`-variance noise for `key` into the real part of `s.buf`
    /// (or the imaginary part when `imag` is set).
    fn draw(&self, key: StreamKey, imag: bool, s: &mut Scratch) {
        let std = self.cfg.lambda.sqrt();
        let mut rng = key.rng();
        // Draws follow row-major pixel order whatever the slot layout.
        for pixel in 0..s.buf.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            let z = &mut s.buf[self.fft.pixel_slot(pixel)];
            if imag {
                z.im = std * e;
            } else {
                *z = Complex64::new(std * e, 0.0);
            }
        }
    }

    /// Masks `s.buf` in the frequency domain. The result stays scaled by `P^2`.
    fn filter(&self, s: &mut Scratch) {
        self.fft.forward(&mut s.buf, &mut s.fft);
        for (z, &keep) in s.buf.iter_mut().zip(&self.keep) {
            if !keep {
                *z = Complex64::default();
            }
        }
        self.fft.inverse(&mut s.buf, &mut s.fft);
    }

    /// Filters the channels of one patch, calling `emit(channel, plane)` with
    /// each row-major `P x P` plane.
    ///
    /// Channels are filtered two at a time, one in the real and one in the
    /// imaginary part of a single transform. The mask is real and
    /// Hermitian-symmetric, so the two never mix.
    fn filter_patch(
        &self,
        key: StreamKey,
        channels: usize,
        s: &mut Scratch,
        mut emit: impl FnMut(usize, &[f64]),
    ) {
        let norm = 1.0 / (self.cfg.patch_size * self.cfg.patch_size) as f64;
        for ch in (0..channels).step_by(2) {
            let paired = ch + 1 < channels;
            self.draw(key.channel(ch as u32), false, s);
            if paired {
                self.draw(key.channel(ch as u32 + 1), true, s);
            }
            self.filter(s);
            for (pixel, o) in s.plane.iter_mut().enumerate() {
                *o = s.buf[self.fft.pixel_slot(pixel)].re * norm;
            }
            emit(ch, &s.plane);
            if paired {
                for (pixel, o) in s.plane.iter_mut().enumerate() {
                    *o = s.buf[self.fft.pixel_slot(pixel)].im * norm;
                }
                emit(ch + 1, &s.plane);
            }
        }
    }

    /// Noise for one patch, `P x P x channels` channel-last, each channel
    /// drawn from its own substream of `key`.
    pub fn patch_noise(&self, key: StreamKey, channels: usize) -> Vec<f64> {
        let mut s = self.scratch();
        let mut out = vec![0.0; s.buf.len() * channels];
        self.filter_patch(key, channels, &mut s, |ch, plane| {
            for (i, v) in plane.iter().enumerate() {
                out[i * channels + ch] = *v;
            }
        });
        out
    }

    /// Largest imaginary part left by the inverse transform when each channel
    /// of the patch is filtered on its own, from the same draws as
    /// [`Perturber::patch_noise`].
    pub fn imaginary_residue(&self, key: StreamKey, channels: usize) -> f64 {
        let norm = 1.0 / (self.cfg.patch_size * self.cfg.patch_size) as f64;
        let mut s = self.scratch();
        let mut residue: f64 = 0.0;
        for ch in 0..channels {
            self.draw(key.channel(ch as u32), false, &mut s);
            self.filter(&mut s);
            residue = s
                .buf
                .iter()
                .fold(residue, |m, z| m.max((z.im * norm).abs()));
        }
        residue
    }

    /// The perturbation for an image of the given shape, keyed by the
    /// image's position in its batch or manifest.
    pub fn delta(
        &self,
        height: usize,
        width: usize,
        channels: usize,
        image_index: u64,
    ) -> Result<ImageTensor> {
        let mut delta = ImageTensor::filled(height, width, channels, 0.0)?;
        self.delta_into(&mut delta, image_index)?;
        Ok(delta)
    }

    /// Overwrites `out` with the perturbation for its shape.
    pub fn delta_into(&self, out: &mut ImageTensor, image_index: u64) -> Result<()> {
        self.check_tiling(out)?;
        if self.is_identity() {
            out.data_mut().fill(0.0);
            return Ok(());
        }
        self.for_each_value(out, image_index, |v, d| *v = d);
        Ok(())
    }

    /// `x + delta`, unclipped. With `lambda == 0` the input is returned
    /// bit-for-bit.
    pub fn perturb(&self, x: &ImageTensor, image_index: u64) -> Result<ImageTensor> {
        self.check_tiling(x)?;
        let mut out = x.clone();
        if !self.is_identity() {
            self.for_each_value(&mut out, image_index, |v, d| *v += d);
        }
        Ok(out)
    }

    fn is_identity(&self) -> bool {
        self.cfg.lambda == 0.0 || self.mask.is_empty()
    }

    fn check_tiling(&self, img: &ImageTensor) -> Result<()> {
        let p = self.cfg.patch_size;
        let (height, width) = (img.height(), img.width());
        if height % p != 0 || width % p != 0 {
            return Err(Error::Dimension(format!(
                "patch size {p} does not tile a {height}x{width} image"
            )));
        }
        Ok(())
    }

    /// Calls `apply(value, delta)` for every element of `img`. Patches are
    /// numbered row-major.
    fn for_each_value(
        &self,
        img: &mut ImageTensor,
        image_index: u64,
        apply: impl Fn(&mut f64, f64),
    ) {
        let p = self.cfg.patch_size;
        let (width, channels) = (img.width(), img.channels());
        let cols = width / p;
        let rows = img.height() / p;
        let mut s = self.scratch();
        let base = StreamKey::new(self.cfg.seed, Domain::Perturbation, image_index);
        let data = img.data_mut();
        for pr in 0..rows {
            for pc in 0..cols {
                let key = base.patch((pr * cols + pc) as u64);
                self.filter_patch(key, channels, &mut s, |ch, plane| {
                    for r in 0..p {
                        let row = (pr * p + r) * width + pc * p;
                        for c in 0..p {
                            apply(&mut data[(row + c) * channels + ch], plane[r * p + c]);
                        }
                    }
                });
            }
        }
    }
}

/// One patch of noise. See [`Perturber::patch_noise`].
pub fn gen_patch_noise(
    patch_size: usize,
    channels: usize,
    lambda: f64,
    tau: f64,
    key: StreamKey,
) -> Result<Vec<f64>> {
    let p = Perturber::new(PerturbConfig {
        lambda,
        tau,
        patch_size,
        seed: key.seed,
    })?;
    Ok(p.patch_noise(key, channels))
}

/// Perturbs `x` as image 0 of a batch.
pub fn perturb_image(x: &ImageTensor, cfg: &PerturbConfig) -> Result<ImageTensor> {
    Perturber::new(*cfg)?.perturb(x, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub height: usize,
    pub width: usize,
    pub seconds: f64,
}

/// Wall-clock of generating `delta` for RGB images of each size, taking the
/// fastest of `repeats` runs. Sizes are timed round-robin so load spikes hit
/// all of them alike. Runs on the calling thread only.
pub fn perturbation_cost_profile(
    cfg: &PerturbConfig,
    sizes: &[(usize, usize)],
    repeats: usize,
) -> Result<Vec<CostRow>> {
    let perturber = Perturber::new(*cfg)?;
    // Warm-up; also surfaces tiling errors before timing.
    let mut outs = sizes
        .iter()
        .map(|&(h, w)| perturber.delta(h, w, 3, 0))
        .collect::<Result<Vec<_>>>()?;
    let mut best = vec![f64::INFINITY; sizes.len()];
    for i in 0..repeats.max(1) {
        for (out, best) in outs.iter_mut().zip(&mut best) {
            let t = Instant::now();
            perturber.delta_into(out, i as u64 + 1)?;
            *best = best.min(t.elapsed().as_secs_f64());
            std::hint::black_box(&*out);
        }
    }
    Ok(sizes
        .iter()
        .zip(best)
        .map(|(&(height, width), seconds)| CostRow {
            height,
            width,
            seconds,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_above_nyquist_diagonal_is_empty() {
        let m = make_highpass_mask(14, 0.75);
        assert_eq!(m.kept_count(), 0);
    }

    #[test]
    fn mask_at_zero_drops_only_dc() {
        let m = make_highpass_mask(14, 0.0);
        assert_eq!(m.kept_count(), 195);
        assert!(!m.is_kept(0, 0));
    }

    #[test]
    fn mask_counts_match_enumeration() {
        // Counts from enumerating every (fu, fv) pair of each grid.
        assert_eq!(make_highpass_mask(14, 0.5).kept_count(), 49);
        assert_eq!(make_highpass_mask(8, 0.3).kept_count(), 43);
        assert_eq!(make_highpass_mask(16, 0.5).kept_count(), 61);
        assert_eq!(make_highpass_mask(224, 0.5).kept_count(), 10797);
        assert_eq!(make_highpass_mask(1, 0.0).kept_count(), 0);
        assert_eq!(make_highpass_mask(14, 0.5).kept_fraction(), 0.25);
    }

    #[test]
    fn mask_is_hermitian() {
        for p in [1, 2, 7, 8, 14, 15] {
            for tau in [0.0, 0.2, 0.5, 0.7] {
                let m = make_highpass_mask(p, tau);
                for u in 0..p {
                    for v in 0..p {
                        assert_eq!(m.is_kept(u, v), m.is_kept((p - u) % p, (p - v) % p));
                    }
                }
            }
        }
    }

    #[test]
    fn zero_lambda_gives_zero_noise_and_identity() {
        let key = StreamKey::new(1, Domain::Perturbation, 0);
        let n = gen_patch_noise(14, 3, 0.0, 0.5, key).unwrap();
        assert!(n.iter().all(|&v| v == 0.0));

        let x =
            ImageTensor::from_fn(28, 28, 3, |r, c, ch| ((r + c + ch) % 5) as f64 / 4.0).unwrap();
        let cfg = PerturbConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert_eq!(perturb_image(&x, &cfg).unwrap(), x);
    }

    #[test]
    fn same_stream_same_noise() {
        let key = StreamKey::new(9, Domain::Perturbation, 2).patch(5);
        let a = gen_patch_noise(14, 3, 0.01, 0.5, key).unwrap();
        let b = gen_patch_noise(14, 3, 0.01, 0.5, key).unwrap();
        assert_eq!(a, b);
        let c = gen_patch_noise(14, 3, 0.01, 0.5, key.patch(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn channels_draw_independently() {
        let key = StreamKey::new(3, Domain::Perturbation, 0);
        let n = gen_patch_noise(8, 3, 0.01, 0.2, key).unwrap();
        let ch0: Vec<f64> = n.iter().step_by(3).copied().collect();
        let ch1: Vec<f64> = n.iter().skip(1).step_by(3).copied().collect();
        assert_ne!(ch0, ch1);
    }

    #[test]
    fn patches_have_zero_mean() {
        let p = Perturber::new(PerturbConfig {
            tau: 0.0,
            patch_size: 7,
            ..Default::default()
        })
        .unwrap();
        let n = p.patch_noise(StreamKey::new(0, Domain::Perturbation, 0), 1);
        assert!(n.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn untileable_image_is_rejected() {
        let x = ImageTensor::filled(30, 28, 3, 0.5).unwrap();
        assert!(matches!(
            perturb_image(&x, &PerturbConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn delta_ignores_content() {
        let cfg = PerturbConfig {
            seed: 11,
            ..Default::default()
        };
        let a = ImageTensor::filled(28, 42, 3, 0.25).unwrap();
        let b = ImageTensor::from_fn(28, 42, 3, |r, c, _| ((r * c) % 7) as f64 / 7.0).unwrap();
        let pa = perturb_image(&a, &cfg).unwrap();
        let pb = perturb_image(&b, &cfg).unwrap();
        let da: Vec<f64> = pa.data().iter().zip(a.data()).map(|(p, x)| p - x).collect();
        let db: Vec<f64> = pb.data().iter().zip(b.data()).map(|(p, x)| p - x).collect();
        let d = Perturber::new(cfg).unwrap().delta(28, 42, 3, 0).unwrap();
        for ((x, y), z) in da.iter().zip(&db).zip(d.data()) {
            assert!((x - z).abs() < 1e-15 && (y - z).abs() < 1e-15);
        }
    }

    #[test]
    fn imaginary_residue_is_negligible() {
        for (p, tau) in [(14, 0.5), (8, 0.1), (15, 0.3), (16, 0.6)] {
            let pert = Perturber::new(PerturbConfig {
                lambda: 0.01,
                tau,
                patch_size: p,
                seed: 4,
            })
            .unwrap();
            let key = StreamKey::new(4, Domain::Perturbation, 0);
            let noise = pert.patch_noise(key, 3);
            let residue = pert.imaginary_residue(key, 3);
            let energy: f64 = noise.iter().map(|v| v * v).sum();
            assert!(
                residue <= 1e-9 * energy.sqrt().max(1e-300),
                "P={p} tau={tau}"
            );
        }
    }

    #[test]
    fn cost_profile_shapes() {
        let cfg = PerturbConfig::default();
        assert!(perturbation_cost_profile(&cfg, &[], 1).unwrap().is_empty());
        let rows = perturbation_cost_profile(&cfg, &[(28, 28)], 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].height, rows[0].width), (28, 28));
        assert!(rows[0].seconds >= 0.0);
    }
}
