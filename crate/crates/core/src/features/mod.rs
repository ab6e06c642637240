//! The filtered feature-extraction pipeline: image squaring and rotation
//! augmentation, high-pass filtering, patch sampling, whitening, codebook
//! learning, triangle encoding and grid max pooling.

pub mod codebook;
pub mod encode;
pub mod filter;
pub mod image;
pub mod kmeans;
pub mod patches;
pub mod whiten;

pub use codebook::Codebook;
pub use encode::encode;
pub use filter::{filter_image, FilterKind, FilterSpec};
pub use image::ImageBuffer;
pub use whiten::Whitening;

use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result};

const TENSOR_MAGIC: &[u8; 8] = b"TSPNFEAT";
const TENSOR_VERSION: u32 = 1;

/// G x G x K pooled encoding of one image; leaf evidence for the SPN.
/// Values are non-negative by construction (triangle encoding rectifies).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    grid: usize,
    channels: usize,
    values: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(grid: usize, channels: usize, values: Vec<f32>) -> Self {
        assert_eq!(values.len(), grid * grid * channels);
        FeatureTensor { grid, channels, values }
    }

    pub fn zeros(grid: usize, channels: usize) -> Self {
        FeatureTensor { grid, channels, values: vec![0.0; grid * grid * channels] }
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// The K-vector at grid position (i, j); None when out of range.
    pub fn at(&self, i: usize, j: usize) -> Option<&[f32]> {
        if i >= self.grid || j >= self.grid {
            return None;
        }
        let start = (i * self.grid + j) * self.channels;
        Some(&self.values[start..start + self.channels])
    }

    /// Cache file: magic, version, G, K, then row-major little-endian f32.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(8 + 12 + self.values.len() * 4);
        buf.extend_from_slice(TENSOR_MAGIC);
        buf.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.grid as u32).to_le_bytes());
        buf.extend_from_slice(&(self.channels as u32).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        write_atomic(path, &buf)
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let bad = |message: &str| Error::BinFormat {
            what: "feature tensor",
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        let mut file = std::fs::File::open(path)?;
        let mut header = [0u8; 20];
        file.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        if &header[0..8] != TENSOR_MAGIC {
            return Err(bad("bad magic"));
        }
        if u32::from_le_bytes(header[8..12].try_into().unwrap()) != TENSOR_VERSION {
            return Err(bad("unsupported version"));
        }
        let grid = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let channels = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
        let mut body = Vec::new();
        file.read_to_end(&mut body)?;
        let expected = grid * grid * channels * 4;
        if body.len() != expected {
            return Err(bad(&format!("body is {} bytes, expected {expected}", body.len())));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(FeatureTensor { grid, channels, values })
    }
}

/// Writes through a sibling temp file and renames, so concurrent producers
/// never expose a half-written artifact.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile_in(dir)?;
    tmp.1.write_all(bytes)?;
    tmp.1.sync_all()?;
    drop(tmp.1);
    std::fs::rename(&tmp.0, path)?;
    Ok(())
}

fn tempfile_in(dir: &Path) -> Result<(std::path::PathBuf, std::fs::File)> {
    use std::time::{SystemTime, UNIX_EPOCH};
    let nanos = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_nanos();
    let pid = std::process::id();
    for attempt in 0..64 {
        let candidate = dir.join(format!(".tmp-{pid}-{nanos}-{attempt}"));
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&candidate) {
            Ok(file) => return Ok((candidate, file)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::AlreadyExists,
        "could not allocate temp file",
    )))
}
