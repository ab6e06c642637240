//! Dataset manifests (`path,label,fold` CSV) and seeded stratified fold
//! assignment.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const MANIFEST_HEADER: &str = "path,label,fold";

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub fold: usize,
}

/// Parses a manifest. The header row is optional; paths must not contain
/// commas.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line == MANIFEST_HEADER) {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Manifest {
                line: lineno,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let label = fields[1].trim().parse().map_err(|_| Error::Manifest {
            line: lineno,
            message: format!("bad label `{}`", fields[1]),
        })?;
        let fold = fields[2].trim().parse().map_err(|_| Error::Manifest {
            line: lineno,
            message: format!("bad fold `{}`", fields[2]),
        })?;
        entries.push(ManifestEntry { path: PathBuf::from(fields[0].trim()), label, fold });
    }
    if entries.is_empty() {
        return Err(Error::Manifest { line: 1, message: "no entries".into() });
    }
    Ok(entries)
}

pub fn manifest_to_string(entries: &[ManifestEntry]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for e in entries {
        out.push_str(&format!("{},{},{}\n", e.path.display(), e.label, e.fold));
    }
    out
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    crate::features::write_atomic(path, manifest_to_string(entries).as_bytes())
}

/// Assigns a fold in [0, folds) per sample, stratified: within each class
/// the indices are shuffled (seeded) and dealt round-robin, keeping every
/// fold's class histogram within one of proportional.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    assert!(folds >= 1);
    let classes = labels.iter().copied().max().unwrap() + 1;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (idx, label) in labels.iter().enumerate() {
        per_class[*label].push(idx);
    }
    for (class, members) in per_class.iter().enumerate() {
        if !members.is_empty() && members.len() < folds {
            return Err(Error::TooFewForFolds { class, n: members.len(), folds });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for members in &mut per_class {
        members.shuffle(&mut rng);
        for (pos, idx) in members.iter().enumerate() {
            assignment[*idx] = pos % folds;
        }
    }
    Ok(assignment)
}

/// Deterministic 80/20 split of indices, seeded; the held-out tail feeds the
/// confusion stage of t-SPN building.
pub fn holdout_split(count: usize, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let held = ((count as f64 * holdout_fraction).round() as usize).min(count.saturating_sub(1));
    let kept = count - held;
    let held_out = indices.split_off(kept);
    (indices, held_out)
}
