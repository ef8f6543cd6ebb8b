//! Small 2D FFT helpers over row-major complex buffers.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner, FftPlannerScalar};

/// Planned forward and inverse transforms for an `n x n` grid.
///
/// The transforms are unnormalized; [`SquareFft::inverse`] does not divide by
/// `n * n`.
pub struct SquareFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SquareFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Transforms in place. The result is transposed, i.e. `buf[v * n + u]`
    /// holds bin `(u, v)`; for symmetric masks this needs no correction.
    pub fn forward_transposed(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.pass(&*self.forward, buf, scratch);
    }

    /// Inverse of [`SquareFft::forward_transposed`], restoring the original
    /// orientation.
    pub fn inverse_transposed(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.pass(&*self.inverse, buf, scratch);
    }

    /// Full forward transform with `buf[u * n + v]` holding bin `(u, v)`.
    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.pass(&*self.forward, buf, scratch);
        transpose_in_place(buf, self.n);
    }

    fn pass(&self, fft: &dyn Fft<f64>, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(buf.len(), n * n);
        assert!(scratch.len() >= self.scratch_len());
        let scratch = &mut scratch[..fft.get_inplace_scratch_len()];
        fft.process_with_scratch(buf, scratch);
        transpose_in_place(buf, n);
        fft.process_with_scratch(buf, scratch);
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }
}

/// Unnormalized 2D DFT of an `n x n` grid that works in a permuted slot order.
///
/// Pixels enter through [`Dft2::pixel_slot`], and after [`Dft2::forward`] slot
/// `s` holds bin [`Dft2::bin`]`(s)`. [`Dft2::inverse`] maps that spectrum back
/// to the pixel slots, scaled by `n * n`. When `n = 2b` with `b` odd, the
/// transform is split Good-Thomas style into four `b x b` transforms and a
/// twiddle-free 2 x 2 butterfly; other sizes use [`SquareFft`].
pub struct Dft2 {
    n: usize,
    plan: Plan,
    pixel_slot: Vec<usize>,
    bin: Vec<(usize, usize)>,
}

enum Plan {
    Square(SquareFft),
    GoodThomas {
        b: usize,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
}

impl Dft2 {
    pub fn new(n: usize) -> Self {
        if n >= 6 && n % 4 == 2 {
            Self::good_thomas(n)
        } else {
            Self {
                n,
                plan: Plan::Square(SquareFft::new(n)),
                pixel_slot: (0..n * n).collect(),
                bin: (0..n * n).map(|s| (s % n, s / n)).collect(),
            }
        }
    }

    fn good_thomas(n: usize) -> Self {
        let b = n / 2;
        let bb = b * b;
        // Input index (b * i1 + 2 * i2) mod n; output index k with
        // k = k1 (mod 2) and k = k2 (mod b).
        let crt = |k1: usize, k2: usize| (0..n).find(|k| k % 2 == k1 && k % b == k2).unwrap();
        let mut pixel_slot = vec![0; n * n];
        let mut bin = vec![(0, 0); n * n];
        for r1 in 0..2 {
            for c1 in 0..2 {
                let block = (r1 * 2 + c1) * bb;
                for r2 in 0..b {
                    for c2 in 0..b {
                        let (r, c) = ((b * r1 + 2 * r2) % n, (b * c1 + 2 * c2) % n);
                        pixel_slot[r * n + c] = block + r2 * b + c2;
                        // The forward pass leaves each block transposed.
                        bin[block + c2 * b + r2] = (crt(r1, r2), crt(c1, c2));
                    }
                }
            }
        }
        let mut planner = FftPlannerScalar::new();
        Self {
            n,
            plan: Plan::GoodThomas {
                b,
                forward: planner.plan_fft_forward(b),
                inverse: planner.plan_fft_inverse(b),
            },
            pixel_slot,
            bin,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Slot holding pixel `index` (row-major) before the forward transform and
    /// after the inverse.
    #[inline]
    pub fn pixel_slot(&self, index: usize) -> usize {
        self.pixel_slot[index]
    }

    /// Frequency bin `(u, v)` held by `slot` after the forward transform.
    #[inline]
    pub fn bin(&self, slot: usize) -> (usize, usize) {
        self.bin[slot]
    }

    pub fn scratch_len(&self) -> usize {
        match &self.plan {
            Plan::Square(sq) => sq.scratch_len(),
            Plan::GoodThomas {
                forward, inverse, ..
            } => forward
                .get_inplace_scratch_len()
                .max(inverse.get_inplace_scratch_len()),
        }
    }

    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        match &self.plan {
            Plan::Square(sq) => sq.forward_transposed(buf, scratch),
            Plan::GoodThomas { b, forward, .. } => {
                blocks(&**forward, *b, buf, scratch);
                butterfly(buf, b * b);
            }
        }
    }

    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        match &self.plan {
            Plan::Square(sq) => sq.inverse_transposed(buf, scratch),
            Plan::GoodThomas { b, inverse, .. } => {
                butterfly(buf, b * b);
                blocks(&**inverse, *b, buf, scratch);
            }
        }
    }
}

/// Row transform, transpose, row transform on each of the four blocks.
fn blocks(fft: &dyn Fft<f64>, b: usize, buf: &mut [Complex64], scratch: &mut [Complex64]) {
    assert_eq!(buf.len(), 4 * b * b);
    let scratch = &mut scratch[..fft.get_inplace_scratch_len()];
    for block in buf.chunks_exact_mut(b * b) {
        fft.process_with_scratch(block, scratch);
        transpose_in_place(block, b);
        fft.process_with_scratch(block, scratch);
    }
}

/// Size-2 DFT along both block axes; its own inverse up to a factor of 4.
fn butterfly(buf: &mut [Complex64], bb: usize) {
    let (a, rest) = buf.split_at_mut(bb);
    let (b, rest) = rest.split_at_mut(bb);
    let (c, d) = rest.split_at_mut(bb);
    for j in 0..bb {
        let (s0, s1) = (a[j] + b[j], a[j] - b[j]);
        let (t0, t1) = (c[j] + d[j], c[j] - d[j]);
        a[j] = s0 + t0;
        b[j] = s1 + t1;
        c[j] = s0 - t0;
        d[j] = s1 - t1;
    }
}

pub fn transpose_in_place<T>(buf: &mut [T], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

/// Signed normalized frequency of DFT bin `k` on an `n`-point grid, in
/// `[-0.5, 0.5]`.
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> f64 {
    if 2 * k <= n {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Radial normalized frequency of bin `(u, v)` on an `n x n` grid.
#[inline]
pub fn radial_frequency(u: usize, v: usize, n: usize) -> f64 {
    signed_frequency(u, n).hypot(signed_frequency(v, n))
}

/// Largest radial frequency on any grid (the Nyquist corner).
pub const MAX_RADIAL_FREQUENCY: f64 = std::f64::consts::FRAC_1_SQRT_2;
