//! Random patch sampling and the flat patch matrix the later stages share.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::ImageBuffer;
use crate::{Error, Result};

/// Row-major matrix of flattened patches (rows x dim).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PatchMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * dim);
        PatchMatrix { rows, dim, data }
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        PatchMatrix { rows, dim, data: vec![0.0; rows * dim] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Flattens the `side` x `side` patch anchored at (r, c) into `out`.
pub(crate) fn copy_patch(img: &ImageBuffer, r: usize, c: usize, side: usize, out: &mut [f64]) {
    let ch = img.channels();
    let mut k = 0;
    for dr in 0..side {
        for dc in 0..side {
            for d in 0..ch {
                out[k] = img.get(r + dr, c + dc, d);
                k += 1;
            }
        }
    }
}

/// Draws `n` patches uniformly over all (image, position) pairs. Seeded and
/// reproducible; every image must be at least `side` on both axes.
pub fn sample_patches(
    images: &[ImageBuffer],
    n: usize,
    side: usize,
    seed: u64,
) -> Result<PatchMatrix> {
    if images.is_empty() {
        return Err(Error::NoImages);
    }
    for img in images {
        if img.height() < side || img.width() < side {
            return Err(Error::ImageTooSmall { h: img.height(), w: img.width(), side });
        }
    }
    let channels = images[0].channels();
    let dim = side * side * channels;
    let mut cumulative = Vec::with_capacity(images.len());
    let mut total: u64 = 0;
    for img in images {
        total += ((img.height() - side + 1) * (img.width() - side + 1)) as u64;
        cumulative.push(total);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PatchMatrix::zeros(n, dim);
    for i in 0..n {
        let pick = rng.gen_range(0..total);
        let img_idx = cumulative.partition_point(|&c| c <= pick);
        let img = &images[img_idx];
        let offset = pick - if img_idx == 0 { 0 } else { cumulative[img_idx - 1] };
        let per_row = img.width() - side + 1;
        let r = (offset / per_row as u64) as usize;
        let c = (offset % per_row as u64) as usize;
        copy_patch(img, r, c, side, out.row_mut(i));
    }
    Ok(out)
}
