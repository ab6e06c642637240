//! Architecture builders: the flat class/part/component/position structure
//! and the tree-structured variant that regroups the most-confused classes
//! under one sub-SPN.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::confusion::ConfusionSubset;
use crate::eval::{evaluate_nodes, Evidence};
use crate::graph::{Node, NodeId, SpnGraph};
use crate::{Error, Result};

/// Label variable id used by every built architecture.
pub const LABEL_VAR: usize = 0;

/// The generative recipe: C classes, P parts per class, T mixture components
/// per part, a G x G pooling grid and K codebook channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub classes: usize,
    pub parts: usize,
    pub components: usize,
    pub grid: usize,
    pub codebook: usize,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec { classes: 6, parts: 10, components: 25, grid: 8, codebook: 1600 }
    }
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("classes", self.classes),
            ("parts", self.parts),
            ("components", self.components),
            ("grid", self.grid),
            ("codebook", self.codebook),
        ] {
            if v == 0 {
                return Err(Error::BadArchitecture { name });
            }
        }
        Ok(())
    }

    /// Node count of the flat build: root, then per class a label indicator,
    /// the class product, P part sums, P*T component sums and P*T*G^2
    /// feature leaves.
    pub fn flat_node_count(&self) -> usize {
        let per_class =
            2 + self.parts * (1 + self.components * (1 + self.grid * self.grid));
        1 + self.classes * per_class
    }
}

/// Builds the flat architecture with seeded initialization: sum-edge weights
/// uniform in [0.5, 1.5] scaled by 1/fan-in, feature vectors standard normal
/// scaled by 1/sqrt(K).
pub fn build_flat(spec: &ArchitectureSpec, seed: u64) -> Result<SpnGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g2 = spec.grid * spec.grid;
    let mut nodes: Vec<Node> = Vec::with_capacity(spec.flat_node_count());
    nodes.push(Node::Sum { children: Vec::with_capacity(spec.classes) }); // root, filled below

    let edge_weight =
        |rng: &mut ChaCha8Rng, fan_in: usize| rng.gen_range(0.5..1.5) / fan_in as f64;

    let mut root_children = Vec::with_capacity(spec.classes);
    for class in 0..spec.classes {
        let indicator = NodeId(nodes.len());
        nodes.push(Node::Indicator { variable: LABEL_VAR, value: class });
        let mut part_ids = Vec::with_capacity(spec.parts);
        for _part in 0..spec.parts {
            let mut component_ids = Vec::with_capacity(spec.components);
            for _component in 0..spec.components {
                let scale = 2.0 / (spec.codebook as f64).sqrt();
                let weights: Vec<f64> = (0..spec.codebook)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                    .collect();
                let mut leaf_edges = Vec::with_capacity(g2);
                for i in 0..spec.grid {
                    for j in 0..spec.grid {
                        let leaf = NodeId(nodes.len());
                        nodes.push(Node::Feature { i, j, weights: weights.clone() });
                        leaf_edges.push((leaf, edge_weight(&mut rng, g2)));
                    }
                }
                let component = NodeId(nodes.len());
                nodes.push(Node::Sum { children: leaf_edges });
                component_ids.push((component, edge_weight(&mut rng, spec.components)));
            }
            let part = NodeId(nodes.len());
            nodes.push(Node::Sum { children: component_ids });
            part_ids.push(part);
        }
        let mut product_children = vec![indicator];
        product_children.extend(part_ids);
        let class_product = NodeId(nodes.len());
        nodes.push(Node::Product { children: product_children });
        root_children.push((class_product, edge_weight(&mut rng, spec.classes)));
    }
    nodes[0] = Node::Sum { children: root_children };
    SpnGraph::new(nodes, NodeId(0), LABEL_VAR, spec.classes)
}

/// Regroups the root of a flat graph: the subset classes move under a fresh
/// sub-root sum whose edge carries the sum of their root weights, with the
/// inner edges renormalized (w_c / sum), so every class keeps its exact
/// unnormalized mass. A subset covering all classes returns the graph
/// unchanged.
pub fn merge_confused(flat: &SpnGraph, subset: &ConfusionSubset) -> Result<SpnGraph> {
    let classes = flat.num_classes();
    let size = subset.classes.len();
    if size < 2 || size > classes {
        return Err(Error::BadSubsetSize { size, classes });
    }
    if size == classes {
        return Ok(flat.clone());
    }
    let root_children = match flat.node(flat.root()) {
        Node::Sum { children } => children.clone(),
        _ => return Err(Error::NotTspn("root is not a sum")),
    };
    if root_children.len() != classes {
        return Err(Error::NotTspn("root fan-out does not match the class count"));
    }
    for (slot, (child, _)) in root_children.iter().enumerate() {
        if branch_label(flat, *child) != Some(slot) {
            return Err(Error::NotClassBranch { slot });
        }
    }

    let mut nodes = flat.nodes().to_vec();
    let merged_weight: f64 =
        subset.classes.iter().map(|c| root_children[*c].1).sum();
    let inner: Vec<(NodeId, f64)> = subset
        .classes
        .iter()
        .map(|c| {
            let (child, w) = root_children[*c];
            let share = if merged_weight > 0.0 { w / merged_weight } else { 1.0 / size as f64 };
            (child, share)
        })
        .collect();
    let sub_root = NodeId(nodes.len());
    nodes.push(Node::Sum { children: inner });

    let mut new_children: Vec<(NodeId, f64)> = root_children
        .iter()
        .enumerate()
        .filter(|(slot, _)| !subset.classes.contains(slot))
        .map(|(_, edge)| *edge)
        .collect();
    new_children.push((sub_root, merged_weight));
    nodes[flat.root().0] = Node::Sum { children: new_children };
    SpnGraph::new(nodes, flat.root(), flat.label_variable(), classes)
}

/// Flat build followed by the confusion regroup; the t-SPN trains as its own
/// freshly initialized model.
pub fn build_tspn(spec: &ArchitectureSpec, subset: &ConfusionSubset, seed: u64) -> Result<SpnGraph> {
    merge_confused(&build_flat(spec, seed)?, subset)
}

/// The class label a single-class root branch commits to: a product with a
/// direct label indicator child.
fn branch_label(graph: &SpnGraph, branch: NodeId) -> Option<usize> {
    if let Node::Product { children } = graph.node(branch) {
        for child in children {
            if let Node::Indicator { variable, value } = graph.node(*child) {
                if *variable == graph.label_variable() {
                    return Some(*value);
                }
            }
        }
    }
    None
}

/// Outcome of the staged decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultistageOutcome {
    pub label: usize,
    /// True when a non-merged branch won at the root; false when the merged
    /// group won and the sub-SPN decided.
    pub decided_at_root: bool,
}

/// Two-stage classification over a merged graph: stage 1 compares the
/// non-merged class branches against the merged group (scored by its best
/// sub-class), stage 2 picks within the sub-SPN. Reads one forward pass, so
/// the result equals the single-shot argmax of the class scores.
pub fn classify_multistage(tspn: &SpnGraph, evidence: &Evidence) -> Result<MultistageOutcome> {
    let mut marginal = evidence.clone();
    marginal.marginalize(tspn.label_variable(), tspn.num_classes());
    let values = evaluate_nodes(tspn, &marginal)?;

    let root_children = match tspn.node(tspn.root()) {
        Node::Sum { children } => children,
        _ => return Err(Error::NotTspn("root is not a sum")),
    };

    struct Branch {
        score: f64,
        label: usize,
        merged: bool,
    }
    let mut branches = Vec::with_capacity(root_children.len());
    for (child, w) in root_children {
        let base = if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
        match tspn.node(*child) {
            Node::Product { .. } => {
                let label = branch_label(tspn, *child)
                    .ok_or(Error::NotTspn("root branch carries no label indicator"))?;
                branches.push(Branch { score: base + values[child.0], label, merged: false });
            }
            Node::Sum { children: inner } => {
                // merged group: best sub-class wins the stage-1 comparison
                let mut best: Option<(f64, usize)> = None;
                for (sub, v) in inner {
                    let label = branch_label(tspn, *sub)
                        .ok_or(Error::NotTspn("sub-SPN branch carries no label indicator"))?;
                    let score = base
                        + if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY }
                        + values[sub.0];
                    if best.map_or(true, |(bs, _)| score > bs) {
                        best = Some((score, label));
                    }
                }
                let (score, label) =
                    best.ok_or(Error::NotTspn("merged branch has no children"))?;
                branches.push(Branch { score, label, merged: true });
            }
            _ => return Err(Error::NotTspn("root branch is neither product nor sum")),
        }
    }

    let mut winner: Option<&Branch> = None;
    for branch in &branches {
        if winner.map_or(true, |best| branch.score > best.score) {
            winner = Some(branch);
        }
    }
    let winner = winner.ok_or(Error::NotTspn("root has no branches"))?;
    Ok(MultistageOutcome { label: winner.label, decided_at_root: !winner.merged })
}
