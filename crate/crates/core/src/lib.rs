//! Tree-structured sum-product networks (t-SPNs) for multi-class image
//! classification.
//!
//! The crate has three layers:
//!
//! - the probabilistic model: SPN graphs ([`graph`]), log-domain evaluation
//!   ([`eval`]), soft and hard (max-product) gradients ([`grad`], [`mpn`]);
//! - learning: conditional log-likelihood and max-margin square-hinge
//!   objectives with SGD ([`learn`]), flat and tree-structured architecture
//!   builders driven by confusion matrices ([`arch`], [`confusion`]);
//! - the feature pipeline: image squaring/rotation, high-pass filtering,
//!   patch sampling, ZCA whitening, k-means codebooks and triangle encoding
//!   ([`features`]), plus dataset manifests and fold splits ([`data`]).

pub mod arch;
pub mod confusion;
pub mod data;
pub mod eval;
pub mod features;
pub mod grad;
pub mod graph;
pub mod learn;
pub mod math;
pub mod mpn;
pub mod pipeline;
pub mod serial;

use std::path::PathBuf;

use thiserror::Error;

use graph::NodeId;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} references child {child} outside [0, {count})")]
    ChildOutOfRange { node: usize, child: usize, count: usize },
    #[error("root {root} outside [0, {count})")]
    RootOutOfRange { root: usize, count: usize },
    #[error("label indicator at node {node} has value {value} but the graph declares {classes} classes")]
    LabelValueOutOfRange { node: usize, value: usize, classes: usize },
    #[error("graph contains a cycle; evaluation order undefined")]
    CyclicGraph,
    #[error("no indicator evidence for variable {var} required by leaf {node}")]
    IncompleteEvidence { node: NodeId, var: usize },
    #[error("indicator evidence for variable {var} has {got} entries, expected {expected}")]
    EvidenceArity { var: usize, got: usize, expected: usize },
    #[error("feature leaf {node} addresses position ({i}, {j}) outside the {g}x{g} tensor")]
    FeaturePosition { node: NodeId, i: usize, j: usize, g: usize },
    #[error("feature leaf {node} has {got} weights, tensor carries {expected} channels")]
    FeatureChannels { node: NodeId, got: usize, expected: usize },
    #[error("indicator evidence must be non-negative, got {value} for variable {var}")]
    NegativeEvidence { var: usize, value: f64 },
    #[error("true label {label} outside [0, {classes})")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("conditional likelihood is zero for label {label}; gradient undefined")]
    ZeroLikelihood { label: usize },
    #[error("weight {edge} on the winning path is {value}; log-gradient undefined")]
    UndefinedGradient { edge: usize, value: f64 },
    #[error("margin needs at least 2 labels, got {0}")]
    TooFewLabels(usize),
    #[error("eta must be >= 1, got {0}")]
    BadEta(f64),
    #[error("objective became non-finite at sample {sample} (epoch {epoch})")]
    Diverged { sample: usize, epoch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("architecture parameter {name} must be positive")]
    BadArchitecture { name: &'static str },
    #[error("confusion matrix has no off-diagonal mass; nothing to merge")]
    NoConfusion,
    #[error("subset size {size} outside [2, {classes}]")]
    BadSubsetSize { size: usize, classes: usize },
    #[error("root child {slot} is not a single-class branch; cannot regroup")]
    NotClassBranch { slot: usize },
    #[error("graph is not a merged t-SPN: {0}")]
    NotTspn(&'static str),
    #[error("image is empty")]
    EmptyImage,
    #[error("{op} requires a square image, got {h}x{w}")]
    NotSquare { op: &'static str, h: usize, w: usize },
    #[error("image {h}x{w} smaller than patch side {side}")]
    ImageTooSmall { h: usize, w: usize, side: usize },
    #[error("cannot sample patches from an empty image list")]
    NoImages,
    #[error("k-means needs at least k={k} points, got {n}")]
    TooFewPoints { k: usize, n: usize },
    #[error("whitening fit needs more patches than dimensions ({dim}), got {n}")]
    TooFewPatches { n: usize, dim: usize },
    #[error("filter mask side must be odd and positive, got {0}")]
    BadMask(usize),
    #[error("{what} mismatch: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: String, got: String },
    #[error("class {class} has {n} samples, fewer than {folds} folds")]
    TooFewForFolds { class: usize, n: usize, folds: usize },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("bad graph text at line {line}: {message}")]
    GraphText { line: usize, message: String },
    #[error("bad {what} file {path:?}: {message}")]
    BinFormat { what: &'static str, path: PathBuf, message: String },
    #[error("failed to decode image {path:?}: {source}")]
    ImageDecode { path: PathBuf, source: image::ImageError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
