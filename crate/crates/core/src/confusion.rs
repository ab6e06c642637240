//! Confusion matrices and the greedy selection of mutually confused classes
//! that drives the t-SPN regroup.

use std::collections::BTreeSet;

use crate::eval::{class_scores, predict};
use crate::graph::SpnGraph;
use crate::learn::Sample;
use crate::{Error, Result};

/// C x C counts, rows true class, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), classes * classes);
        ConfusionMatrix { classes, counts }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class * self.classes + predicted] += 1;
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let trace: u64 = (0..self.classes).map(|c| self.count(c, c)).sum();
        trace as f64 / total as f64
    }

    /// Off-diagonal confusion between two classes, direction-free.
    pub fn symmetric(&self, a: usize, b: usize) -> u64 {
        self.count(a, b) + self.count(b, a)
    }

    pub fn precision(&self, class: usize) -> f64 {
        let column: u64 = (0..self.classes).map(|t| self.count(t, class)).sum();
        if column == 0 {
            return 0.0;
        }
        self.count(class, class) as f64 / column as f64
    }

    pub fn recall(&self, class: usize) -> f64 {
        let row: u64 = (0..self.classes).map(|p| self.count(class, p)).sum();
        if row == 0 {
            return 0.0;
        }
        self.count(class, class) as f64 / row as f64
    }

    /// Rows scaled to percentages, the reporting layout.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        (0..self.classes)
            .map(|t| {
                let row: u64 = (0..self.classes).map(|p| self.count(t, p)).sum();
                (0..self.classes)
                    .map(|p| {
                        if row == 0 {
                            0.0
                        } else {
                            100.0 * self.count(t, p) as f64 / row as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// CSV with a header row of class names; rows are true classes.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("true\\pred");
        for p in 0..self.classes {
            out.push(',');
            out.push_str(names.get(p).map(String::as_str).unwrap_or("?"));
        }
        out.push('\n');
        for t in 0..self.classes {
            out.push_str(names.get(t).map(String::as_str).unwrap_or("?"));
            for p in 0..self.classes {
                out.push_str(&format!(",{}", self.count(t, p)));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the classifier over a labeled set and tallies the matrix.
pub fn confusion(graph: &SpnGraph, data: &[Sample]) -> Result<ConfusionMatrix> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut cm = ConfusionMatrix::new(graph.num_classes());
    for sample in data {
        if sample.label >= graph.num_classes() {
            return Err(Error::LabelOutOfRange {
                label: sample.label,
                classes: graph.num_classes(),
            });
        }
        let scores = class_scores(graph, &sample.evidence)?;
        cm.record(sample.label, predict(&scores));
    }
    Ok(cm)
}

/// The classes grouped under one sub-SPN.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionSubset {
    pub classes: BTreeSet<usize>,
}

impl ConfusionSubset {
    pub fn new(classes: impl IntoIterator<Item = usize>) -> Self {
        ConfusionSubset { classes: classes.into_iter().collect() }
    }

    /// Pairwise symmetric confusion mass inside the subset.
    pub fn score(&self, cm: &ConfusionMatrix) -> u64 {
        let members: Vec<usize> = self.classes.iter().copied().collect();
        let mut score = 0;
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                score += cm.symmetric(*a, *b);
            }
        }
        score
    }

    /// Single-line selection record.
    pub fn log_line(&self, cm: &ConfusionMatrix) -> String {
        let classes: Vec<String> = self.classes.iter().map(|c| c.to_string()).collect();
        format!("{{classes: [{}], score: {}}}", classes.join(", "), self.score(cm))
    }
}

/// Greedy subset selection: seed with the pair of maximal symmetric
/// confusion, then grow by the class most confused against the current
/// subset. Ties break toward lower class indices.
pub fn select_confused(cm: &ConfusionMatrix, size: usize) -> Result<ConfusionSubset> {
    let classes = cm.classes();
    if size < 2 || size > classes {
        return Err(Error::BadSubsetSize { size, classes });
    }
    let mut best_pair = None;
    let mut best = 0;
    for a in 0..classes {
        for b in a + 1..classes {
            let s = cm.symmetric(a, b);
            if s > best {
                best = s;
                best_pair = Some((a, b));
            }
        }
    }
    let (a, b) = best_pair.ok_or(Error::NoConfusion)?;

    let mut subset: BTreeSet<usize> = [a, b].into();
    while subset.len() < size {
        let mut next = None;
        let mut next_score = 0;
        for candidate in 0..classes {
            if subset.contains(&candidate) {
                continue;
            }
            let s: u64 = subset.iter().map(|m| cm.symmetric(candidate, *m)).sum();
            if next.is_none() || s > next_score {
                next = Some(candidate);
                next_score = s;
            }
        }
        subset.insert(next.expect("size <= classes guarantees a candidate"));
    }
    Ok(ConfusionSubset { classes: subset })
}

/// Default subset size: the connected component (over above-median
/// symmetric confusion edges) containing the most-confused pair, clamped to
/// [2, C].
pub fn heuristic_subset_size(cm: &ConfusionMatrix) -> usize {
    let classes = cm.classes();
    let mut offdiag: Vec<u64> = Vec::new();
    for a in 0..classes {
        for b in a + 1..classes {
            offdiag.push(cm.symmetric(a, b));
        }
    }
    if offdiag.iter().all(|v| *v == 0) {
        return 2;
    }
    offdiag.sort_unstable();
    let median = offdiag[offdiag.len() / 2];

    let (mut seed_pair, mut best) = ((0, 1), 0);
    for a in 0..classes {
        for b in a + 1..classes {
            if cm.symmetric(a, b) > best {
                best = cm.symmetric(a, b);
                seed_pair = (a, b);
            }
        }
    }
    // flood fill over non-zero edges at or above the median
    let mut component: BTreeSet<usize> = [seed_pair.0, seed_pair.1].into();
    let mut frontier = vec![seed_pair.0, seed_pair.1];
    while let Some(node) = frontier.pop() {
        for other in 0..classes {
            let s = cm.symmetric(node, other);
            if !component.contains(&other) && s > 0 && s >= median {
                component.insert(other);
                frontier.push(other);
            }
        }
    }
    component.len().clamp(2, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::fixtures;
    use crate::eval::Evidence;

    fn sample_gp(graph: &SpnGraph, g: bool, p: bool, label: usize) -> Sample {
        let mut ev = Evidence::marginal_for(graph);
        ev.set_binary(fixtures::VAR_G, g).set_binary(fixtures::VAR_P, p);
        Sample::new(ev, label)
    }

    #[test]
    fn perfectly_classified_set_is_diagonal() {
        let g = fixtures::fig2();
        // G=1,P=0 favors y0 (0.2*0.9*0.9 = 0.162 vs 0.8*0.5*0.7 = 0.28)... use
        // the dominant queries instead: G=0 favors y1, G=1,P=0 favors y1 too;
        // feed each sample its own predicted label
        let data = vec![sample_gp(&g, true, true, 1), sample_gp(&g, false, false, 1)];
        let cm = confusion(&g, &data).unwrap();
        assert_eq!(cm.count(1, 1), 2);
        assert_eq!(cm.accuracy(), 1.0);
    }

    #[test]
    fn single_misclassification_lands_in_one_cell() {
        let g = fixtures::fig3a();
        // class 1 wins the G=1,P=1 query; call the true label 0
        let data = vec![sample_gp(&g, true, true, 0)];
        let cm = confusion(&g, &data).unwrap();
        assert_eq!(cm.count(0, 1), 1);
        assert_eq!(cm.total(), 1);
        assert_eq!(cm.accuracy(), 0.0);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let g = fixtures::fig2();
        assert!(matches!(confusion(&g, &[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn dominant_pair_is_selected() {
        let mut cm = ConfusionMatrix::new(4);
        for _ in 0..30 {
            cm.record(1, 2);
            cm.record(2, 1);
        }
        cm.record(0, 3);
        let subset = select_confused(&cm, 2).unwrap();
        assert_eq!(subset.classes, [1, 2].into());
    }

    #[test]
    fn uniform_offdiagonal_ties_break_low() {
        let mut counts = vec![1u64; 9];
        for c in 0..3 {
            counts[c * 3 + c] = 50;
        }
        let cm = ConfusionMatrix::from_counts(3, counts);
        let subset = select_confused(&cm, 2).unwrap();
        assert_eq!(subset.classes, [0, 1].into());
    }

    #[test]
    fn growth_adds_the_most_confused_class() {
        let mut cm = ConfusionMatrix::new(4);
        for _ in 0..30 {
            cm.record(1, 2);
        }
        for _ in 0..10 {
            cm.record(3, 1);
        }
        cm.record(0, 1);
        let subset = select_confused(&cm, 3).unwrap();
        assert_eq!(subset.classes, [1, 2, 3].into());
        assert_eq!(subset.score(&cm), 40);
    }

    #[test]
    fn all_diagonal_matrix_has_no_confusion() {
        let mut cm = ConfusionMatrix::new(3);
        cm.record(0, 0);
        cm.record(1, 1);
        assert!(matches!(select_confused(&cm, 2), Err(Error::NoConfusion)));
    }

    #[test]
    fn selection_is_permutation_equivariant() {
        let base = ConfusionMatrix::from_counts(
            4,
            vec![
                90, 5, 1, 0, //
                7, 80, 2, 1, //
                0, 3, 95, 12, //
                1, 0, 9, 70,
            ],
        );
        let perm = [2usize, 0, 3, 1]; // new index of each old class
        let mut permuted = ConfusionMatrix::new(4);
        for a in 0..4 {
            for b in 0..4 {
                for _ in 0..base.count(a, b) {
                    permuted.record(perm[a], perm[b]);
                }
            }
        }
        let s1 = select_confused(&base, 2).unwrap();
        let s2 = select_confused(&permuted, 2).unwrap();
        let mapped: BTreeSet<usize> = s1.classes.iter().map(|c| perm[*c]).collect();
        assert_eq!(mapped, s2.classes);
    }

    #[test]
    fn heuristic_size_tracks_the_confused_component() {
        // classes 0-1-2 strongly interconfused, class 3 clean
        let mut cm = ConfusionMatrix::new(4);
        for _ in 0..20 {
            cm.record(0, 1);
            cm.record(1, 2);
            cm.record(2, 0);
        }
        for c in 0..4 {
            for _ in 0..50 {
                cm.record(c, c);
            }
        }
        assert_eq!(heuristic_subset_size(&cm), 3);
    }

    #[test]
    fn csv_layout_has_header_and_rows() {
        let mut cm = ConfusionMatrix::new(2);
        cm.record(0, 0);
        cm.record(0, 1);
        cm.record(1, 1);
        let names = vec!["a".to_string(), "b".to_string()];
        let csv = cm.to_csv(&names);
        assert_eq!(csv, "true\\pred,a,b\na,1,1\nb,0,1\n");
        let rows = cm.row_normalized();
        assert_eq!(rows[0], vec![50.0, 50.0]);
        assert!((cm.precision(1) - 0.5).abs() < 1e-15);
        assert!((cm.recall(0) - 0.5).abs() < 1e-15);
    }
}
