//! Whitened patch codebooks: fitting from filtered images and binary IO.

use std::io::Read;
use std::path::Path;

use super::image::ImageBuffer;
use super::kmeans::kmeans;
use super::patches::{sample_patches, PatchMatrix};
use super::whiten::{whiten_fit, Whitening, ZCA_EPSILON};
use super::write_atomic;
use crate::{Error, Result};

const CODEBOOK_MAGIC: &[u8; 8] = b"TSPNCDBK";
const CODEBOOK_VERSION: u32 = 1;

/// Everything the encoder needs: K whitened centroids plus the transform
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centroids: PatchMatrix,
    pub whitening: Whitening,
    pub patch_side: usize,
    pub channels: usize,
    pub seed: u64,
}

/// Knobs for [`Codebook::fit`].
#[derive(Debug, Clone)]
pub struct CodebookParams {
    pub k: usize,
    pub n_patches: usize,
    pub patch_side: usize,
    pub rounds: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for CodebookParams {
    fn default() -> Self {
        CodebookParams {
            k: 1600,
            n_patches: 400_000,
            patch_side: 6,
            rounds: 50,
            epsilon: ZCA_EPSILON,
            seed: 0,
        }
    }
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.dim()
    }

    /// Samples patches from filtered training images, whitens them and runs
    /// k-means. Fully seeded.
    pub fn fit(images: &[ImageBuffer], params: &CodebookParams) -> Result<Codebook> {
        let channels = images.first().ok_or(Error::NoImages)?.channels();
        let patches = sample_patches(images, params.n_patches, params.patch_side, params.seed)?;
        let (whitening, whitened) = whiten_fit(&patches, params.epsilon)?;
        let result = kmeans(&whitened, params.k, params.rounds, params.seed)?;
        Ok(Codebook {
            centroids: result.centroids,
            whitening,
            patch_side: params.patch_side,
            channels,
            seed: params.seed,
        })
    }

    /// Binary layout: magic, version, k, dim, patch_side, channels, epsilon,
    /// seed, then centroids (k x dim), transform (dim x dim) and mean (dim)
    /// as little-endian f64.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let (k, dim) = (self.k(), self.dim());
        let mut buf = Vec::with_capacity(48 + 8 * (k * dim + dim * dim + dim));
        buf.extend_from_slice(CODEBOOK_MAGIC);
        buf.extend_from_slice(&CODEBOOK_VERSION.to_le_bytes());
        buf.extend_from_slice(&(k as u32).to_le_bytes());
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.patch_side as u32).to_le_bytes());
        buf.extend_from_slice(&(self.channels as u32).to_le_bytes());
        buf.extend_from_slice(&self.whitening.epsilon.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for v in self.centroids.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.whitening.transform {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.whitening.mean {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        write_atomic(path, &buf)
    }

    pub fn read_from(path: &Path) -> Result<Codebook> {
        let bad = |message: String| Error::BinFormat {
            what: "codebook",
            path: path.to_path_buf(),
            message,
        };
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 48 || &bytes[0..8] != CODEBOOK_MAGIC {
            return Err(bad("bad magic or truncated header".into()));
        }
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if u32_at(8) != CODEBOOK_VERSION {
            return Err(bad(format!("unsupported version {}", u32_at(8))));
        }
        let k = u32_at(12) as usize;
        let dim = u32_at(16) as usize;
        let patch_side = u32_at(20) as usize;
        let channels = u32_at(24) as usize;
        let epsilon = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
        let seed = u64::from_le_bytes(bytes[36..44].try_into().unwrap());
        let expected = 44 + 8 * (k * dim + dim * dim + dim);
        if bytes.len() != expected {
            return Err(bad(format!("file is {} bytes, expected {expected}", bytes.len())));
        }
        let mut floats = bytes[44..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let centroids: Vec<f64> = floats.by_ref().take(k * dim).collect();
        let transform: Vec<f64> = floats.by_ref().take(dim * dim).collect();
        let mean: Vec<f64> = floats.collect();
        Ok(Codebook {
            centroids: PatchMatrix::new(k, dim, centroids),
            whitening: Whitening { mean, transform, dim, epsilon },
            patch_side,
            channels,
            seed,
        })
    }
}
