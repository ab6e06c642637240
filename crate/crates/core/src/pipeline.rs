//! Variant orchestration: plain/max-margin training over the flat or
//! tree-structured architecture, including the preliminary-classification
//! stage that picks the confused subset.

use std::str::FromStr;

use crate::arch::{build_flat, build_tspn, ArchitectureSpec};
use crate::confusion::{confusion, heuristic_subset_size, select_confused, ConfusionSubset};
use crate::data::holdout_split;
use crate::graph::SpnGraph;
use crate::learn::{train_cll, train_mm, EpochMetrics, Sample, TrainingConfig};
use crate::{Error, Result};

/// The four experiment rows: CLL or max-margin objective over the flat or
/// merged structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Spn,
    SpnMm,
    Tspn,
    TspnMm,
}

impl Variant {
    pub fn is_tspn(self) -> bool {
        matches!(self, Variant::Tspn | Variant::TspnMm)
    }

    pub fn is_max_margin(self) -> bool {
        matches!(self, Variant::SpnMm | Variant::TspnMm)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Spn => "spn",
            Variant::SpnMm => "spn_mm",
            Variant::Tspn => "tspn",
            Variant::TspnMm => "tspn_mm",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "spn" => Ok(Variant::Spn),
            "spn_mm" => Ok(Variant::SpnMm),
            "tspn" => Ok(Variant::Tspn),
            "tspn_mm" => Ok(Variant::TspnMm),
            other => Err(format!("unknown variant `{other}` (spn|spn_mm|tspn|tspn_mm)")),
        }
    }
}

/// Fraction of the training set held out for the confusion stage.
pub const CONFUSION_HOLDOUT: f64 = 0.2;

/// Result of [`train_variant`].
#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub graph: SpnGraph,
    pub metrics: Vec<EpochMetrics>,
    /// The merged subset, when a t-SPN variant actually merged.
    pub subset: Option<ConfusionSubset>,
    /// A t-SPN was requested but no confusion existed; fell back to flat.
    pub fell_back: bool,
}

/// Trains one variant end to end. The t-SPN path pre-trains a plain SPN on
/// 80% of the data, reads the confusion matrix off the held-out 20%, selects
/// the subset, builds the merged graph fresh and retrains on everything.
pub fn train_variant(
    spec: &ArchitectureSpec,
    data: &[Sample],
    variant: Variant,
    config: &TrainingConfig,
    subset_size: Option<usize>,
) -> Result<VariantOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let train = |graph: &mut SpnGraph, samples: &[Sample]| -> Result<Vec<EpochMetrics>> {
        if variant.is_max_margin() {
            train_mm(graph, samples, config)
        } else {
            train_cll(graph, samples, config)
        }
    };

    if !variant.is_tspn() {
        let mut graph = build_flat(spec, config.seed)?;
        let metrics = train(&mut graph, data)?;
        return Ok(VariantOutcome { graph, metrics, subset: None, fell_back: false });
    }

    // preliminary classification with a plain SPN to expose the confusion
    let (train_idx, held_idx) = holdout_split(data.len(), CONFUSION_HOLDOUT, config.seed);
    let pre_train: Vec<Sample> = train_idx.iter().map(|i| data[*i].clone()).collect();
    let held_out: Vec<Sample> = held_idx.iter().map(|i| data[*i].clone()).collect();
    let mut preliminary = build_flat(spec, config.seed)?;
    train_cll(&mut preliminary, &pre_train, config)?;
    let cm = confusion(&preliminary, &held_out)?;

    let size = subset_size.unwrap_or_else(|| heuristic_subset_size(&cm));
    let subset = match select_confused(&cm, size) {
        Ok(subset) => subset,
        Err(Error::NoConfusion) => {
            // nothing to merge: train the flat architecture instead
            let mut graph = build_flat(spec, config.seed)?;
            let metrics = train(&mut graph, data)?;
            return Ok(VariantOutcome { graph, metrics, subset: None, fell_back: true });
        }
        Err(e) => return Err(e),
    };

    let mut graph = build_tspn(spec, &subset, config.seed)?;
    let metrics = train(&mut graph, data)?;
    Ok(VariantOutcome { graph, metrics, subset: Some(subset), fell_back: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_roundtrip() {
        for v in [Variant::Spn, Variant::SpnMm, Variant::Tspn, Variant::TspnMm] {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("cnn".parse::<Variant>().is_err());
    }
}
