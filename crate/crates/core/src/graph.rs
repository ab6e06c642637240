//! SPN graph representation and structural validity checking.
//!
//! An [`SpnGraph`] is a rooted DAG of sum, product, indicator-leaf and
//! feature-leaf nodes. Sum edges carry non-negative weights. Validity means
//! complete (children of a sum share a scope) and decomposable (children of a
//! product have pairwise disjoint scopes). Feature leaves stand for the given
//! feature tensor X: they share one pseudo-variable which counts toward
//! completeness but is exempt from the disjointness check, since X is treated
//! as a constant during discriminative evaluation.

use std::collections::BTreeMap;
use std::fmt;

use crate::{Error, Result};

/// Index of a node within one graph. Dense in `[0, node_count)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// One node of the DAG.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Weighted sum; edge weights must be non-negative.
    Sum { children: Vec<(NodeId, f64)> },
    /// Product of children.
    Product { children: Vec<NodeId> },
    /// Tests `variable == value`. Binary variables use value 1 for the
    /// positive polarity and 0 for the negated one.
    Indicator { variable: usize, value: usize },
    /// Log-linear leaf over the feature vector at one grid position:
    /// log-value is `weights . x[i][j]`.
    Feature { i: usize, j: usize, weights: Vec<f64> },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Indicator { .. } | Node::Feature { .. })
    }
}

/// Scope of a node: the indicator variables it ranges over, plus whether the
/// given feature block X appears below it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Scope {
    pub variables: std::collections::BTreeSet<usize>,
    pub has_features: bool,
}

impl Scope {
    pub fn is_empty(&self) -> bool {
        self.variables.is_empty() && !self.has_features
    }

    fn union_with(&mut self, other: &Scope) {
        self.variables.extend(other.variables.iter().copied());
        self.has_features |= other.has_features;
    }

    fn variables_disjoint(&self, other: &Scope) -> bool {
        self.variables.is_disjoint(&other.variables)
    }
}

/// A single validity violation, anchored at the offending node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Sum node whose children scopes differ.
    Incomplete { node: NodeId },
    /// Product node with two children sharing an indicator variable.
    NotDecomposable { node: NodeId, variable: usize },
    /// Sum edge with a negative weight.
    NegativeWeight { node: NodeId, child_slot: usize },
    /// Node on a directed cycle.
    Cycle { node: NodeId },
    /// Node the root cannot reach.
    Unreachable { node: NodeId },
    /// Internal node with no children (empty scope).
    NoChildren { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Incomplete { node } => {
                write!(f, "sum {node} incomplete: children scopes differ")
            }
            Violation::NotDecomposable { node, variable } => {
                write!(f, "product {node} not decomposable: variable {variable} shared")
            }
            Violation::NegativeWeight { node, child_slot } => {
                write!(f, "sum {node} edge {child_slot} has negative weight")
            }
            Violation::Cycle { node } => write!(f, "{node} lies on a cycle"),
            Violation::Unreachable { node } => write!(f, "{node} unreachable from root"),
            Violation::NoChildren { node } => write!(f, "internal {node} has no children"),
        }
    }
}

/// Outcome of [`SpnGraph::validate`].
#[derive(Debug, Clone, Default)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Rooted DAG of sum/product/leaf nodes with a designated class-label
/// variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SpnGraph {
    nodes: Vec<Node>,
    root: NodeId,
    label_variable: usize,
    num_classes: usize,
    /// Children-before-parents order over reachable nodes; None if cyclic.
    topo: Option<Vec<NodeId>>,
    /// (sum node, child slot) per trainable weight, in node order.
    sum_edges: Vec<(NodeId, usize)>,
    /// Arity per indicator variable (label arity pinned to num_classes).
    var_arity: BTreeMap<usize, usize>,
}

impl SpnGraph {
    /// Builds a graph, checking only well-formedness (indices in range,
    /// label values within the declared class count). Validity proper is
    /// reported by [`SpnGraph::validate`].
    pub fn new(
        nodes: Vec<Node>,
        root: NodeId,
        label_variable: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let count = nodes.len();
        if root.0 >= count {
            return Err(Error::RootOutOfRange { root: root.0, count });
        }
        for (idx, node) in nodes.iter().enumerate() {
            for child in children_of(node) {
                if child.0 >= count {
                    return Err(Error::ChildOutOfRange { node: idx, child: child.0, count });
                }
            }
            if let Node::Indicator { variable, value } = node {
                if *variable == label_variable && *value >= num_classes {
                    return Err(Error::LabelValueOutOfRange {
                        node: idx,
                        value: *value,
                        classes: num_classes,
                    });
                }
            }
        }

        let mut var_arity = BTreeMap::new();
        var_arity.insert(label_variable, num_classes);
        for node in &nodes {
            if let Node::Indicator { variable, value } = node {
                if *variable != label_variable {
                    let arity = var_arity.entry(*variable).or_insert(2);
                    *arity = (*arity).max(value + 1);
                }
            }
        }

        let topo = topo_order(&nodes, root);
        let sum_edges = enumerate_sum_edges(&nodes);
        Ok(SpnGraph { nodes, root, label_variable, num_classes, topo, sum_edges, var_arity })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn label_variable(&self) -> usize {
        self.label_variable
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Children-before-parents order over the nodes reachable from the root.
    pub fn topo_order(&self) -> Result<&[NodeId]> {
        self.topo.as_deref().ok_or(Error::CyclicGraph)
    }

    /// Indicator variables present in the graph with their arities. The
    /// label variable is always listed with arity `num_classes`.
    pub fn variables(&self) -> &BTreeMap<usize, usize> {
        &self.var_arity
    }

    pub fn var_arity(&self, variable: usize) -> Option<usize> {
        self.var_arity.get(&variable).copied()
    }

    /// Flat enumeration of sum edges, the trainable weight vector layout.
    pub fn sum_edges(&self) -> &[(NodeId, usize)] {
        &self.sum_edges
    }

    pub fn weight_count(&self) -> usize {
        self.sum_edges.len()
    }

    pub fn weight(&self, edge: usize) -> f64 {
        let (node, slot) = self.sum_edges[edge];
        match &self.nodes[node.0] {
            Node::Sum { children } => children[slot].1,
            _ => unreachable!("sum_edges points at sum nodes"),
        }
    }

    pub fn set_weight(&mut self, edge: usize, value: f64) {
        let (node, slot) = self.sum_edges[edge];
        match &mut self.nodes[node.0] {
            Node::Sum { children } => children[slot].1 = value,
            _ => unreachable!("sum_edges points at sum nodes"),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.weight_count()).map(|e| self.weight(e)).collect()
    }

    pub fn set_weights(&mut self, weights: &[f64]) {
        assert_eq!(weights.len(), self.weight_count());
        for (edge, w) in weights.iter().enumerate() {
            self.set_weight(edge, *w);
        }
    }

    pub fn weight_norm_sq(&self) -> f64 {
        (0..self.weight_count()).map(|e| self.weight(e).powi(2)).sum()
    }

    /// Per-node scopes, bottom-up. Nodes on cycles get a best-effort scope.
    pub fn scopes(&self) -> Vec<Scope> {
        let mut scopes = vec![Scope::default(); self.nodes.len()];
        let order: Vec<NodeId> = match &self.topo {
            Some(order) => order.clone(),
            // Cyclic graphs still get leaf scopes so validate can report.
            None => (0..self.nodes.len()).map(NodeId).collect(),
        };
        for id in order {
            let scope = match &self.nodes[id.0] {
                Node::Indicator { variable, .. } => {
                    let mut s = Scope::default();
                    s.variables.insert(*variable);
                    s
                }
                Node::Feature { .. } => Scope { variables: Default::default(), has_features: true },
                Node::Sum { children } => {
                    let mut s = Scope::default();
                    for (child, _) in children {
                        s.union_with(&scopes[child.0]);
                    }
                    s
                }
                Node::Product { children } => {
                    let mut s = Scope::default();
                    for child in children {
                        s.union_with(&scopes[child.0]);
                    }
                    s
                }
            };
            scopes[id.0] = scope;
        }
        scopes
    }

    /// Reports every completeness, decomposability, negative-weight, cycle,
    /// reachability and empty-node violation.
    pub fn validate(&self) -> ValidityReport {
        let mut violations = Vec::new();

        let reachable = self.reachable();
        for (idx, on) in reachable.iter().enumerate() {
            if !on {
                violations.push(Violation::Unreachable { node: NodeId(idx) });
            }
        }
        if self.topo.is_none() {
            for id in self.cycle_nodes() {
                violations.push(Violation::Cycle { node: id });
            }
        }

        let scopes = self.scopes();
        for (idx, node) in self.nodes.iter().enumerate() {
            let id = NodeId(idx);
            match node {
                Node::Sum { children } => {
                    if children.is_empty() {
                        violations.push(Violation::NoChildren { node: id });
                        continue;
                    }
                    for (slot, (_, w)) in children.iter().enumerate() {
                        if *w < 0.0 {
                            violations.push(Violation::NegativeWeight { node: id, child_slot: slot });
                        }
                    }
                    let first = &scopes[children[0].0 .0];
                    if children.iter().any(|(c, _)| &scopes[c.0] != first) {
                        violations.push(Violation::Incomplete { node: id });
                    }
                }
                Node::Product { children } => {
                    if children.is_empty() {
                        violations.push(Violation::NoChildren { node: id });
                        continue;
                    }
                    'outer: for (a_pos, a) in children.iter().enumerate() {
                        for b in &children[a_pos + 1..] {
                            let (sa, sb) = (&scopes[a.0], &scopes[b.0]);
                            if !sa.variables_disjoint(sb) {
                                let variable = *sa
                                    .variables
                                    .intersection(&sb.variables)
                                    .next()
                                    .expect("non-disjoint scopes share a variable");
                                violations.push(Violation::NotDecomposable { node: id, variable });
                                break 'outer;
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        ValidityReport { violations }
    }

    fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        seen[self.root.0] = true;
        while let Some(id) = stack.pop() {
            for child in children_of(&self.nodes[id.0]) {
                if !seen[child.0] {
                    seen[child.0] = true;
                    stack.push(child);
                }
            }
        }
        seen
    }

    /// Reachable nodes on or above a cycle: the fixpoint of "done once all
    /// children are done" never reaches them.
    fn cycle_nodes(&self) -> Vec<NodeId> {
        let mut done = vec![false; self.nodes.len()];
        loop {
            let mut changed = false;
            for idx in 0..self.nodes.len() {
                if !done[idx] && children_of(&self.nodes[idx]).iter().all(|c| done[c.0]) {
                    done[idx] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.reachable()
            .iter()
            .enumerate()
            .filter(|(idx, on)| **on && !done[*idx])
            .map(|(idx, _)| NodeId(idx))
            .collect()
    }
}

pub(crate) fn children_of(node: &Node) -> Vec<NodeId> {
    match node {
        Node::Sum { children } => children.iter().map(|(c, _)| *c).collect(),
        Node::Product { children } => children.clone(),
        _ => Vec::new(),
    }
}

/// Iterative DFS post-order; None if a back edge (cycle) is found.
fn topo_order(nodes: &[Node], root: NodeId) -> Option<Vec<NodeId>> {
    let mut state = vec![0u8; nodes.len()]; // 0 unseen, 1 open, 2 done
    let mut order = Vec::new();
    let mut stack = vec![(root, false)];
    while let Some((id, expanded)) = stack.pop() {
        if expanded {
            state[id.0] = 2;
            order.push(id);
            continue;
        }
        match state[id.0] {
            1 => return None, // back edge
            2 => continue,
            _ => {}
        }
        state[id.0] = 1;
        stack.push((id, true));
        for child in children_of(&nodes[id.0]) {
            match state[child.0] {
                0 => stack.push((child, false)),
                1 => return None,
                _ => {}
            }
        }
    }
    Some(order)
}

fn enumerate_sum_edges(nodes: &[Node]) -> Vec<(NodeId, usize)> {
    let mut edges = Vec::new();
    for (idx, node) in nodes.iter().enumerate() {
        if let Node::Sum { children } = node {
            for slot in 0..children.len() {
                edges.push((NodeId(idx), slot));
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::fixtures;

    #[test]
    fn fig2_network_is_valid() {
        let g = fixtures::fig2();
        let report = g.validate();
        assert!(report.is_ok(), "unexpected violations: {:?}", report.violations);
    }

    #[test]
    fn single_indicator_graph_is_valid() {
        let g = SpnGraph::new(
            vec![Node::Indicator { variable: 1, value: 1 }],
            NodeId(0),
            0,
            2,
        )
        .unwrap();
        assert!(g.validate().is_ok());
    }

    #[test]
    fn shared_scope_under_product_is_flagged() {
        // product with two children both scoped {1}
        let nodes = vec![
            Node::Product { children: vec![NodeId(1), NodeId(2)] },
            Node::Indicator { variable: 1, value: 1 },
            Node::Indicator { variable: 1, value: 0 },
        ];
        let g = SpnGraph::new(nodes, NodeId(0), 0, 2).unwrap();
        let report = g.validate();
        assert_eq!(
            report.violations,
            vec![Violation::NotDecomposable { node: NodeId(0), variable: 1 }]
        );
    }

    #[test]
    fn incomplete_sum_is_flagged() {
        let nodes = vec![
            Node::Sum { children: vec![(NodeId(1), 0.5), (NodeId(2), 0.5)] },
            Node::Indicator { variable: 1, value: 1 },
            Node::Indicator { variable: 2, value: 1 },
        ];
        let g = SpnGraph::new(nodes, NodeId(0), 0, 2).unwrap();
        let report = g.validate();
        assert!(report
            .violations
            .contains(&Violation::Incomplete { node: NodeId(0) }));
    }

    #[test]
    fn negative_weight_is_flagged() {
        let nodes = vec![
            Node::Sum { children: vec![(NodeId(1), -0.25), (NodeId(2), 0.5)] },
            Node::Indicator { variable: 1, value: 1 },
            Node::Indicator { variable: 1, value: 0 },
        ];
        let g = SpnGraph::new(nodes, NodeId(0), 0, 2).unwrap();
        let report = g.validate();
        assert!(report
            .violations
            .contains(&Violation::NegativeWeight { node: NodeId(0), child_slot: 0 }));
    }

    #[test]
    fn cycle_is_flagged_and_blocks_topo() {
        let nodes = vec![
            Node::Sum { children: vec![(NodeId(1), 1.0)] },
            Node::Product { children: vec![NodeId(0), NodeId(2)] },
            Node::Indicator { variable: 1, value: 1 },
        ];
        let g = SpnGraph::new(nodes, NodeId(0), 0, 2).unwrap();
        assert!(g.topo_order().is_err());
        let report = g.validate();
        assert!(report.violations.iter().any(|v| matches!(v, Violation::Cycle { .. })));
    }

    #[test]
    fn unreachable_node_is_flagged() {
        let nodes = vec![
            Node::Indicator { variable: 1, value: 1 },
            Node::Indicator { variable: 1, value: 0 },
        ];
        let g = SpnGraph::new(nodes, NodeId(0), 0, 2).unwrap();
        let report = g.validate();
        assert_eq!(report.violations, vec![Violation::Unreachable { node: NodeId(1) }]);
    }

    #[test]
    fn out_of_range_child_is_a_structural_error() {
        let nodes = vec![Node::Sum { children: vec![(NodeId(7), 1.0)] }];
        let err = SpnGraph::new(nodes, NodeId(0), 0, 2).unwrap_err();
        assert!(matches!(err, Error::ChildOutOfRange { node: 0, child: 7, .. }));
    }

    #[test]
    fn weight_roundtrip_through_flat_index() {
        let mut g = fixtures::fig2();
        let n = g.weight_count();
        assert_eq!(n, 10); // root 2 edges + 4 leaf sums with 2 edges each
        let mut w = g.weights();
        w[0] = 0.25;
        g.set_weights(&w);
        assert_eq!(g.weight(0), 0.25);
    }
}
