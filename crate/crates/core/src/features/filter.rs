//! High-pass filters: an ideal rectangular filter applied in the frequency
//! domain and a Laplacian-of-Gaussian kernel applied spatially.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::image::ImageBuffer;
use crate::{Error, Result};

/// Which filter to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    IdealHpf,
    Log,
    None,
}

/// Filter parameters. `d0 = None` uses the per-image default 2*pi/N.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub d0: Option<f64>,
    pub gain_low: f64,
    pub gain_high: f64,
    pub sigma: f64,
    pub mask: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            kind: FilterKind::IdealHpf,
            d0: None,
            // 0.14*pi : 2*pi attenuation ratio, normalized to unit pass-band
            gain_low: 0.07,
            gain_high: 1.0,
            sigma: 0.2,
            mask: 5,
        }
    }
}

impl FilterSpec {
    pub fn ideal_hpf(d0: Option<f64>, gain_low: f64, gain_high: f64) -> Self {
        FilterSpec { kind: FilterKind::IdealHpf, d0, gain_low, gain_high, ..Self::default() }
    }

    pub fn log(sigma: f64, mask: usize) -> Self {
        FilterSpec { kind: FilterKind::Log, sigma, mask, ..Self::default() }
    }
}

/// Applies the configured filter per channel. The ideal high-pass path
/// requires a square image (DFT grid); LoG convolves with mirror boundary.
pub fn filter_image(img: &ImageBuffer, spec: &FilterSpec) -> Result<ImageBuffer> {
    match spec.kind {
        FilterKind::None => Ok(img.clone()),
        FilterKind::IdealHpf => ideal_hpf(img, spec),
        FilterKind::Log => log_filter(img, spec),
    }
}

fn ideal_hpf(img: &ImageBuffer, spec: &FilterSpec) -> Result<ImageBuffer> {
    if !img.is_square() {
        return Err(Error::NotSquare { op: "ideal_hpf", h: img.height(), w: img.width() });
    }
    let n = img.height();
    let d0 = spec.d0.unwrap_or(2.0 * std::f64::consts::PI / n as f64);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut out = ImageBuffer::zeros(n, n, img.channels());
    let mut grid = vec![Complex::new(0.0, 0.0); n * n];
    let mut column = vec![Complex::new(0.0, 0.0); n];
    for ch in 0..img.channels() {
        for r in 0..n {
            for c in 0..n {
                grid[r * n + c] = Complex::new(img.get(r, c, ch), 0.0);
            }
        }
        for r in 0..n {
            fwd.process(&mut grid[r * n..(r + 1) * n]);
        }
        for c in 0..n {
            for r in 0..n {
                column[r] = grid[r * n + c];
            }
            fwd.process(&mut column);
            for r in 0..n {
                grid[r * n + c] = column[r];
            }
        }

        for (idx, value) in grid.iter_mut().enumerate() {
            let (u, v) = (idx / n, idx % n);
            let gain = if in_low_rectangle(u, n, d0) && in_low_rectangle(v, n, d0) {
                spec.gain_low
            } else {
                spec.gain_high
            };
            *value *= gain;
        }

        for c in 0..n {
            for r in 0..n {
                column[r] = grid[r * n + c];
            }
            inv.process(&mut column);
            for r in 0..n {
                grid[r * n + c] = column[r];
            }
        }
        for r in 0..n {
            inv.process(&mut grid[r * n..(r + 1) * n]);
        }
        let scale = 1.0 / (n * n) as f64;
        for r in 0..n {
            for c in 0..n {
                out.set(r, c, ch, grid[r * n + c].re * scale);
            }
        }
    }
    Ok(out)
}

/// Normalized frequency of bin `u` lies within the cutoff on this axis.
#[inline]
fn in_low_rectangle(u: usize, n: usize, d0: f64) -> bool {
    let signed = if u <= n / 2 { u as f64 } else { u as f64 - n as f64 };
    let omega = 2.0 * std::f64::consts::PI * signed.abs() / n as f64;
    omega <= d0 * (1.0 + 1e-12)
}

/// Laplacian-of-Gaussian kernel, mean-adjusted to sum exactly zero.
pub fn log_kernel(mask: usize, sigma: f64) -> Result<Vec<f64>> {
    if mask == 0 || mask % 2 == 0 {
        return Err(Error::BadMask(mask));
    }
    let half = (mask / 2) as f64;
    let two_sigma_sq = 2.0 * sigma * sigma;
    let mut gauss = vec![0.0; mask * mask];
    let mut sum = 0.0;
    for r in 0..mask {
        for c in 0..mask {
            let (dy, dx) = (r as f64 - half, c as f64 - half);
            let g = (-(dx * dx + dy * dy) / two_sigma_sq).exp();
            gauss[r * mask + c] = g;
            sum += g;
        }
    }
    let mut kernel = vec![0.0; mask * mask];
    for r in 0..mask {
        for c in 0..mask {
            let (dy, dx) = (r as f64 - half, c as f64 - half);
            let g = gauss[r * mask + c] / sum;
            kernel[r * mask + c] = g * (dx * dx + dy * dy - two_sigma_sq) / sigma.powi(4);
        }
    }
    let mean = kernel.iter().sum::<f64>() / (mask * mask) as f64;
    for k in &mut kernel {
        *k -= mean;
    }
    Ok(kernel)
}

fn log_filter(img: &ImageBuffer, spec: &FilterSpec) -> Result<ImageBuffer> {
    let kernel = log_kernel(spec.mask, spec.sigma)?;
    let half = (spec.mask / 2) as isize;
    let mut out = ImageBuffer::zeros(img.height(), img.width(), img.channels());
    for r in 0..img.height() {
        for c in 0..img.width() {
            for ch in 0..img.channels() {
                let mut acc = 0.0;
                for kr in 0..spec.mask {
                    for kc in 0..spec.mask {
                        let sr = r as isize + kr as isize - half;
                        let sc = c as isize + kc as isize - half;
                        acc += kernel[kr * spec.mask + kc] * img.get_mirrored(sr, sc, ch);
                    }
                }
                out.set(r, c, ch, acc);
            }
        }
    }
    Ok(out)
}
