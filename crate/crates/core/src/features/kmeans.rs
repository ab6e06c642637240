//! Lloyd k-means over whitened patches.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::patches::PatchMatrix;
use crate::{Error, Result};

/// Centroids plus the per-round within-cluster SSE trace.
#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub centroids: PatchMatrix,
    pub sse_per_round: Vec<f64>,
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Runs `rounds` Lloyd iterations (stopping early once assignments fixate).
/// Init draws `k` distinct patches uniformly; empty clusters are reseeded
/// from the point farthest from its centroid.
pub fn kmeans(patches: &PatchMatrix, k: usize, rounds: usize, seed: u64) -> Result<KmeansResult> {
    let (n, dim) = (patches.rows(), patches.dim());
    if n < k || k == 0 {
        return Err(Error::TooFewPoints { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = PatchMatrix::zeros(k, dim);
    for (slot, idx) in sample(&mut rng, n, k).iter().enumerate() {
        centroids.row_mut(slot).copy_from_slice(patches.row(idx));
    }

    let mut assignment = vec![usize::MAX; n];
    let mut sse_per_round = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let mut changed = false;
        let mut sse = 0.0;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = dist_sq(patches.row(i), centroids.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            sse += best_d;
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        sse_per_round.push(sse);
        if !changed {
            break;
        }

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (j, v) in patches.row(i).iter().enumerate() {
                sums[c * dim + j] += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids.row_mut(c)[j] = sums[c * dim + j] / counts[c] as f64;
                }
            } else {
                // reseed from the globally farthest point
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = dist_sq(patches.row(a), centroids.row(assignment[a]));
                        let db = dist_sq(patches.row(b), centroids.row(assignment[b]));
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids.row_mut(c).copy_from_slice(patches.row(far));
            }
        }
    }
    Ok(KmeansResult { centroids, sse_per_round })
}
