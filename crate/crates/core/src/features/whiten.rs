//! Per-patch contrast normalization and ZCA whitening.

use nalgebra::{DMatrix, DVector};

use super::patches::PatchMatrix;
use crate::{Error, Result};

/// Variance floor added before the contrast-normalizing division.
pub const NORMALIZE_FLOOR: f64 = 10.0;

/// Default eigenvalue regularizer for the whitening transform.
pub const ZCA_EPSILON: f64 = 0.01;

/// Fitted ZCA transform: x -> W (x - mean) with W = V (D + eps I)^(-1/2) V^T.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    pub mean: Vec<f64>,
    /// dim x dim symmetric matrix, row-major.
    pub transform: Vec<f64>,
    pub dim: usize,
    pub epsilon: f64,
}

impl Whitening {
    /// Whitens one already-normalized patch in place.
    pub fn apply_row(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.dim);
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (i, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, c) in centered.iter().enumerate() {
                acc += self.transform[i * self.dim + j] * c;
            }
            *out = acc;
        }
    }
}

/// Subtracts the patch mean and divides by sqrt(var + 10). Constant patches
/// map to all-zeros.
pub fn normalize_row(row: &mut [f64]) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var + NORMALIZE_FLOOR).sqrt();
    for v in row {
        *v = (*v - mean) * scale;
    }
}

/// Row-wise [`normalize_row`] over a whole patch matrix.
pub fn normalize_patches(patches: &mut PatchMatrix) {
    for i in 0..patches.rows() {
        normalize_row(patches.row_mut(i));
    }
}

/// Fits the ZCA transform on (already normalized) patches. Covariance
/// eigenvalues are clamped at zero, so rank deficiency only costs accuracy,
/// never an error.
pub fn zca_fit(patches: &PatchMatrix, epsilon: f64) -> Result<Whitening> {
    let (n, dim) = (patches.rows(), patches.dim());
    if n <= dim {
        return Err(Error::TooFewPatches { n, dim });
    }
    let mut mean = DVector::zeros(dim);
    for i in 0..n {
        for (j, v) in patches.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    mean /= n as f64;

    let mut cov = DMatrix::zeros(dim, dim);
    let mut centered = DVector::zeros(dim);
    for i in 0..n {
        for (j, v) in patches.row(i).iter().enumerate() {
            centered[j] = v - mean[j];
        }
        cov.syger(1.0 / n as f64, &centered, &centered, 1.0);
    }
    // syger fills the lower triangle; mirror it
    for r in 0..dim {
        for c in r + 1..dim {
            cov[(r, c)] = cov[(c, r)];
        }
    }

    let eig = cov.symmetric_eigen();
    let mut transform = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let lambda = eig.eigenvalues[k].max(0.0);
        let scale = 1.0 / (lambda + epsilon).sqrt();
        let v = eig.eigenvectors.column(k);
        transform.syger(scale, &v, &v, 1.0);
    }
    for r in 0..dim {
        for c in r + 1..dim {
            transform[(r, c)] = transform[(c, r)];
        }
    }

    Ok(Whitening {
        mean: mean.iter().copied().collect(),
        transform: transform.transpose().as_slice().to_vec(),
        dim,
        epsilon,
    })
}

/// Normalization followed by ZCA fit: the full training-side transform.
pub fn whiten_fit(patches: &PatchMatrix, epsilon: f64) -> Result<(Whitening, PatchMatrix)> {
    let mut normalized = patches.clone();
    normalize_patches(&mut normalized);
    let zca = zca_fit(&normalized, epsilon)?;
    let mut whitened = normalized;
    whiten_apply(&zca, &mut whitened);
    Ok((zca, whitened))
}

/// Applies a fitted transform to already-normalized patches.
pub fn whiten_apply(zca: &Whitening, patches: &mut PatchMatrix) {
    for i in 0..patches.rows() {
        zca.apply_row(patches.row_mut(i));
    }
}
