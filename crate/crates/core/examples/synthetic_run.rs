//! Trains all four variants on a seeded synthetic 3-class dataset with a
//! confusable pair and prints train/test accuracies. A desk-scale rehearsal
//! of the experiment grid.
//!
//! Run with: cargo run --release -p tspn-core --example synthetic_run [seed]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tspn_core::arch::ArchitectureSpec;
use tspn_core::eval::Evidence;
use tspn_core::features::FeatureTensor;
use tspn_core::learn::{accuracy_with, Inference, Sample, TrainingConfig};
use tspn_core::pipeline::{train_variant, Variant};

/// Tri-modal sparse-activation classes; classes 1 and 2 are the confusable
/// pair (shifted copies of the same modes), class 0 is independent.
fn synthetic(seed: u64, samples: usize, grid: usize, k: usize) -> Vec<(Arc<FeatureTensor>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid * grid * k;
    let modes = 3usize;
    let sparse_mean = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim)
            .map(|_| if rng.gen::<f64>() < 0.3 { rng.gen_range(0.5..1.5) } else { 0.0 })
            .collect()
    };
    // class 1 anchors the geometry: class 2 is a small sparse perturbation
    // of it (the confusable pair), class 0 a blend of fresh structure with
    // class 1 (separable, but the group boundary still has to be learned)
    let anchor: Vec<Vec<f64>> = (0..modes).map(|_| sparse_mean(&mut rng)).collect();
    let blended: Vec<Vec<f64>> = anchor
        .iter()
        .map(|mode| {
            let fresh = sparse_mean(&mut rng);
            mode.iter().zip(&fresh).map(|(a, f)| 0.4 * a + 0.6 * f).collect()
        })
        .collect();
    let shifted: Vec<Vec<f64>> = anchor
        .iter()
        .map(|mode| {
            let mut m = mode.clone();
            for _ in 0..8 {
                let d = rng.gen_range(0..dim);
                m[d] = (m[d] + rng.gen_range(-1.0..1.0)).max(0.0);
            }
            m
        })
        .collect();
    let class_modes: Vec<Vec<Vec<f64>>> = vec![blended, anchor, shifted];
    (0..samples)
        .map(|i| {
            let label = i % 3;
            let mode = &class_modes[label][rng.gen_range(0..modes)];
            let values: Vec<f32> = mode
                .iter()
                .map(|m| {
                    let n: f64 = rng.sample(rand_distr::StandardNormal);
                    (m + 0.2 * n).max(0.0) as f32
                })
                .collect();
            (Arc::new(FeatureTensor::new(grid, k, values)), label)
        })
        .collect()
}

fn main() {
    let seeds: Vec<u64> = if std::env::args().len() > 1 {
        std::env::args().skip(1).map(|s| s.parse().unwrap()).collect()
    } else {
        vec![1, 2, 3, 4, 5]
    };
    let spec = ArchitectureSpec { classes: 3, parts: 2, components: 16, grid: 2, codebook: 16 };

    let mut means = [0.0f64; 4];
    for &seed in &seeds {
        let data = synthetic(seed, 600, spec.grid, spec.codebook);
        let (train, test): (Vec<_>, Vec<_>) = {
            let mut tr = Vec::new();
            let mut te = Vec::new();
            for (i, item) in data.iter().enumerate() {
                if i % 4 == 3 {
                    te.push(item.clone());
                } else {
                    tr.push(item.clone());
                }
            }
            (tr, te)
        };
        let to_samples = |graph: &tspn_core::graph::SpnGraph, set: &[(Arc<FeatureTensor>, usize)]| {
            set.iter()
                .map(|(t, l)| Sample::new(Evidence::for_features(graph, Arc::clone(t)), *l))
                .collect::<Vec<_>>()
        };

        for (slot, variant) in
            [Variant::Spn, Variant::SpnMm, Variant::Tspn, Variant::TspnMm].iter().enumerate()
        {
            let config = TrainingConfig {
                epochs: 30,
                seed,
                alpha: if variant.is_max_margin() { 0.02 } else { 0.05 },
                lambda: 1.0,
                eta: 2.0,
                beta: 0.0,
                inference: Inference::Soft,
                ..Default::default()
            };
            let probe = tspn_core::arch::build_flat(&spec, config.seed).unwrap();
            let train_samples = to_samples(&probe, &train);
            let started = std::time::Instant::now();
            let outcome = train_variant(&spec, &train_samples, *variant, &config, Some(2)).unwrap();
            let test_samples = to_samples(&outcome.graph, &test);
            let train_acc = outcome.metrics.last().map(|m| m.train_accuracy).unwrap_or(0.0);
            let test_acc = accuracy_with(&outcome.graph, &test_samples, config.inference).unwrap();
            means[slot] += test_acc / seeds.len() as f64;
            println!(
                "{:8} seed {seed}: train {train_acc:.3} test {test_acc:.3} subset {:?} fell_back {} ({:.2?})",
                variant.as_str(),
                outcome.subset.as_ref().map(|s| s.classes.iter().copied().collect::<Vec<_>>()),
                outcome.fell_back,
                started.elapsed(),
            );
        }
    }
    println!(
        "\nmeans over {} seeds: spn {:.4}  spn_mm {:.4}  tspn {:.4}  tspn_mm {:.4}",
        seeds.len(),
        means[0],
        means[1],
        means[2],
        means[3]
    );
}
