//! Triangle encoding against a codebook plus grid max pooling.

use super::codebook::Codebook;
use super::image::ImageBuffer;
use super::patches::copy_patch;
use super::whiten::normalize_row;
use super::FeatureTensor;
use crate::{Error, Result};

/// Encodes a filtered image: every stride-1 patch is normalized, whitened
/// and mapped to `max(0, mean(z) - z_k)` over centroid distances z, then the
/// (H-side+1) x (W-side+1) x K activation map is max-pooled onto a
/// `grid` x `grid` partition.
pub fn encode(img: &ImageBuffer, codebook: &Codebook, grid: usize) -> Result<FeatureTensor> {
    let side = codebook.patch_side;
    if img.height() < side || img.width() < side {
        return Err(Error::ImageTooSmall { h: img.height(), w: img.width(), side });
    }
    if img.channels() != codebook.channels {
        return Err(Error::Shape {
            what: "image channels",
            expected: codebook.channels.to_string(),
            got: img.channels().to_string(),
        });
    }
    let k = codebook.k();
    let rows = img.height() - side + 1;
    let cols = img.width() - side + 1;

    let mut pre_pool = vec![0.0f64; rows * cols * k];
    let mut patch = vec![0.0f64; codebook.dim()];
    let mut z = vec![0.0f64; k];
    for r in 0..rows {
        for c in 0..cols {
            copy_patch(img, r, c, side, &mut patch);
            normalize_row(&mut patch);
            codebook.whitening.apply_row(&mut patch);
            let mut mean_z = 0.0;
            for (slot, zk) in z.iter_mut().enumerate() {
                let d: f64 = codebook
                    .centroids
                    .row(slot)
                    .iter()
                    .zip(&patch)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                *zk = d.sqrt();
                mean_z += *zk;
            }
            mean_z /= k as f64;
            let out = &mut pre_pool[(r * cols + c) * k..(r * cols + c + 1) * k];
            for (slot, zk) in z.iter().enumerate() {
                out[slot] = (mean_z - zk).max(0.0);
            }
        }
    }

    let mut tensor = FeatureTensor::zeros(grid, k);
    let bound = |i: usize, extent: usize| ((i * extent) as f64 / grid as f64).round() as usize;
    for gi in 0..grid {
        let (r0, r1) = (bound(gi, rows), bound(gi + 1, rows));
        for gj in 0..grid {
            let (c0, c1) = (bound(gj, cols), bound(gj + 1, cols));
            let cell = &mut tensor.values_mut()[(gi * grid + gj) * k..(gi * grid + gj + 1) * k];
            for r in r0..r1 {
                for c in c0..c1 {
                    let acts = &pre_pool[(r * cols + c) * k..(r * cols + c + 1) * k];
                    for (slot, a) in acts.iter().enumerate() {
                        cell[slot] = cell[slot].max(*a as f32);
                    }
                }
            }
        }
    }
    Ok(tensor)
}
