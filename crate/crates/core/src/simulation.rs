//! Synthetic test scenes, point spread functions, noise and image metrics.

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::convolution::Kernel;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

/// Additive i.i.d. Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub mean: f64,
    pub std_dev: f64,
    pub seed: u64,
}

/// Point spread function description.
#[derive(Clone, Debug, PartialEq)]
pub enum PsfSpec<T> {
    Gaussian { size: Vec<usize>, sigma: f64 },
    Delta { ndim: usize },
    Custom(Tensor<T>),
}

impl<T: Real> PsfSpec<T> {
    pub fn build(&self) -> Result<Kernel<T>> {
        let kernel = match self {
            PsfSpec::Gaussian { size, sigma } => gaussian_psf(size, *sigma)?,
            PsfSpec::Delta { ndim } => Kernel::delta(*ndim)?,
            PsfSpec::Custom(t) => Kernel::new(t.clone())?,
        };
        if kernel.tensor().min_value() < T::zero() {
            return Err(Error::InvalidArgument("point spread function has negative entries".into()));
        }
        Ok(kernel)
    }
}

/// Gaussian samples from a fixed generator.
///
/// ChaCha20 seeded through `seed_from_u64`, with the Box–Muller transform:
/// `u1 = 1 - k1·2^-53` in (0, 1], `u2 = k2·2^-53` in [0, 1) from the top 53
/// bits of two successive `u64` draws, then `r = sqrt(-2 ln u1)` yields
/// `r cos(2π u2)` followed by `r sin(2π u2)`. The stream is part of the
/// reproducibility contract of simulated data; do not change it.
pub struct GaussianStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        GaussianStream { rng: ChaCha20Rng::seed_from_u64(seed), spare: None }
    }

    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Next standard normal sample.
    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Adds seeded Gaussian noise; the output is not clamped.
pub fn add_gaussian_noise<T: Real>(t: &Tensor<T>, spec: &NoiseSpec) -> Result<Tensor<T>> {
    if !(spec.std_dev >= 0.0) || !spec.std_dev.is_finite() || !spec.mean.is_finite() {
        return Err(Error::InvalidArgument(format!("bad noise parameters {spec:?}")));
    }
    let mut stream = GaussianStream::new(spec.seed);
    let data = t
        .vectorize()
        .iter()
        .map(|&v| v + T::of(spec.mean + spec.std_dev * stream.next_standard()))
        .collect();
    Tensor::from_vec(t.shape().clone(), data)
}

/// Samples `exp(-|s - p|² / 2σ²)` on an odd grid, normalized to unit sum.
pub fn gaussian_psf<T: Real>(size: &[usize], sigma: f64) -> Result<Kernel<T>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let shape = Shape::new(size.to_vec())?;
    if size.iter().any(|d| d % 2 == 0) {
        return Err(Error::InvalidArgument(format!("PSF extents {size:?} must be odd")));
    }
    let radii: Vec<f64> = size.iter().map(|&d| ((d - 1) / 2) as f64).collect();
    let raw = Tensor::from_fn(shape, |idx| {
        let r2: f64 = idx.iter().zip(&radii).map(|(&s, &p)| (s as f64 - p).powi(2)).sum();
        (-r2 / (2.0 * sigma * sigma)).exp()
    });
    let total = raw.sum();
    Kernel::new(raw.convert(|v| T::of(v / total)))
}

/// Lines through the image center at angles `iπ/n`, one pixel wide.
///
/// The center pixel is `(rows / 2, cols / 2)`. Mostly horizontal lines get
/// one pixel per column and mostly vertical lines one pixel per row, so
/// every line spans the image.
pub fn phantom_lines<T: Real>(rows: usize, cols: usize, n_lines: usize, intensity: T) -> Result<Tensor<T>> {
    if rows < 3 || cols < 3 {
        return shape_err(format!("phantom needs at least 3x3 pixels, got {rows}x{cols}"));
    }
    if n_lines == 0 {
        return Err(Error::InvalidArgument("at least one line is required".into()));
    }
    let shape = Shape::new(vec![rows, cols])?;
    let mut data = vec![T::zero(); rows * cols];
    let (cr, cc) = ((rows / 2) as f64, (cols / 2) as f64);
    for i in 0..n_lines {
        let theta = i as f64 * PI / n_lines as f64;
        let (sin, cos) = theta.sin_cos();
        if cos.abs() >= sin.abs() {
            let slope = sin / cos;
            for c in 0..cols {
                let r = (cr - (c as f64 - cc) * slope).round();
                if r >= 0.0 && r < rows as f64 {
                    data[r as usize * cols + c] = intensity;
                }
            }
        } else {
            let slope = cos / sin;
            for r in 0..rows {
                let c = (cc - (r as f64 - cr) * slope).round();
                if c >= 0.0 && c < cols as f64 {
                    data[r * cols + c as usize] = intensity;
                }
            }
        }
    }
    Tensor::from_vec(shape, data)
}

/// Deterministic 8-bit scene with smooth shading, flat blocks, disks and a
/// striped band; a stand-in for natural test images.
pub fn phantom_texture<T: Real>(rows: usize, cols: usize) -> Result<Tensor<T>> {
    if rows < 3 || cols < 3 {
        return shape_err(format!("phantom needs at least 3x3 pixels, got {rows}x{cols}"));
    }
    let shape = Shape::new(vec![rows, cols])?;
    let (h, w) = (rows as f64, cols as f64);
    Ok(Tensor::from_fn(shape, |idx| {
        let (r, c) = (idx[0] as f64 / h, idx[1] as f64 / w);
        let mut v = 40.0 + 60.0 * r + 30.0 * c;
        if (0.1..0.35).contains(&r) && (0.1..0.45).contains(&c) {
            v = 200.0;
        }
        if (0.6..0.9).contains(&r) && (0.15..0.3).contains(&c) {
            v = 15.0;
        }
        let d1 = ((r - 0.3).powi(2) + (c - 0.72).powi(2)).sqrt();
        if d1 < 0.15 {
            v = 230.0 - 400.0 * d1;
        }
        let d2 = ((r - 0.72).powi(2) + (c - 0.62).powi(2)).sqrt();
        if d2 < 0.08 {
            v = 250.0;
        } else if d2 < 0.16 {
            v = 90.0;
        }
        if (0.45..0.55).contains(&r) {
            v = 128.0 + 100.0 * (2.0 * PI * c * 12.0).sin();
        }
        T::of(v.round().clamp(0.0, 255.0))
    }))
}

/// The block of a full-convolution output aligned with the input grid:
/// offset `p_i` on every axis.
pub fn aligned_observation<T: Real>(y: &Tensor<T>, h: &Kernel<T>, x_shape: &Shape) -> Result<Tensor<T>> {
    y.crop(&h.radii(), x_shape)
}

/// `10 log10(Σ ref² / Σ (est - ref)²)`, `+inf` for an exact match.
pub fn snr_db<T: Real>(reference: &Tensor<T>, estimate: &Tensor<T>) -> Result<T> {
    reference.check_same_shape(estimate)?;
    let signal: T = reference.vectorize().iter().map(|&v| v * v).sum();
    if signal == T::zero() {
        return Err(Error::UndefinedMetric("reference image is all zero".into()));
    }
    let error: T = reference
        .vectorize()
        .iter()
        .zip(estimate.vectorize())
        .map(|(&r, &e)| (e - r) * (e - r))
        .sum();
    if error == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::of(10.0) * (signal / error).log10())
}
