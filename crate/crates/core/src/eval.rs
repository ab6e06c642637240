//! Log-domain bottom-up evaluation with indicator clamping.
//!
//! Marginal and conditional queries are all expressed through evidence:
//! clamping every value-indicator of a variable to 1 marginalizes it, so the
//! partition function is just evaluation under all-ones evidence.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::features::FeatureTensor;
use crate::graph::{Node, SpnGraph};
use crate::math::log_sum_exp;
use crate::{Error, Result};

/// Indicator inputs per variable plus the optional feature tensor.
///
/// Each variable maps to one non-negative input per value; {0, 1} encodes
/// hard evidence and all-ones marginalizes the variable. A missing feature
/// tensor marginalizes every feature leaf (log-value 0).
#[derive(Debug, Clone, Default)]
pub struct Evidence {
    indicators: BTreeMap<usize, Vec<f64>>,
    features: Option<Arc<FeatureTensor>>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    /// All indicator variables of `graph` clamped to 1, features absent:
    /// evaluating this computes the partition function.
    pub fn marginal_for(graph: &SpnGraph) -> Self {
        let mut ev = Self::new();
        for (&var, &arity) in graph.variables() {
            ev.indicators.insert(var, vec![1.0; arity]);
        }
        ev
    }

    /// Marginal evidence carrying a feature tensor, the usual query for
    /// classification: label and hidden indicators free, features given.
    pub fn for_features(graph: &SpnGraph, tensor: Arc<FeatureTensor>) -> Self {
        let mut ev = Self::marginal_for(graph);
        ev.features = Some(tensor);
        ev
    }

    /// Sets the full input vector for one variable.
    pub fn set_indicators(&mut self, variable: usize, values: Vec<f64>) -> &mut Self {
        self.indicators.insert(variable, values);
        self
    }

    /// Clamps `variable` to `value` (one-hot input of length `arity`).
    pub fn set_value(&mut self, variable: usize, value: usize, arity: usize) -> &mut Self {
        let mut v = vec![0.0; arity];
        v[value] = 1.0;
        self.indicators.insert(variable, v);
        self
    }

    /// Convenience for binary variables: true is value 1.
    pub fn set_binary(&mut self, variable: usize, positive: bool) -> &mut Self {
        self.set_value(variable, positive as usize, 2)
    }

    /// Clamps every value of `variable` to 1 (sums it out).
    pub fn marginalize(&mut self, variable: usize, arity: usize) -> &mut Self {
        self.indicators.insert(variable, vec![1.0; arity]);
        self
    }

    pub fn set_features(&mut self, tensor: Arc<FeatureTensor>) -> &mut Self {
        self.features = Some(tensor);
        self
    }

    pub fn features(&self) -> Option<&FeatureTensor> {
        self.features.as_deref()
    }

    /// The raw input for one (variable, value) indicator, if present.
    pub fn indicator_value(&self, variable: usize, value: usize) -> Option<f64> {
        self.indicators.get(&variable).and_then(|v| v.get(value)).copied()
    }

    fn indicator_input(&self, node: crate::graph::NodeId, variable: usize, value: usize) -> Result<f64> {
        let inputs = self
            .indicators
            .get(&variable)
            .ok_or(Error::IncompleteEvidence { node, var: variable })?;
        let v = *inputs
            .get(value)
            .ok_or(Error::EvidenceArity { var: variable, got: inputs.len(), expected: value + 1 })?;
        if v < 0.0 {
            return Err(Error::NegativeEvidence { var: variable, value: v });
        }
        Ok(v)
    }
}

/// Log-value of a leaf node under the given evidence; shared by soft and
/// max-product evaluation.
pub(crate) fn leaf_log_value(
    graph: &SpnGraph,
    evidence: &Evidence,
    id: crate::graph::NodeId,
) -> Result<f64> {
    match graph.node(id) {
        Node::Indicator { variable, value } => {
            let v = evidence.indicator_input(id, *variable, *value)?;
            Ok(if v == 0.0 { f64::NEG_INFINITY } else { v.ln() })
        }
        Node::Feature { i, j, weights } => match evidence.features() {
            None => Ok(0.0),
            Some(tensor) => {
                let x = tensor.at(*i, *j).ok_or(Error::FeaturePosition {
                    node: id,
                    i: *i,
                    j: *j,
                    g: tensor.grid(),
                })?;
                if weights.len() != x.len() {
                    return Err(Error::FeatureChannels {
                        node: id,
                        got: weights.len(),
                        expected: x.len(),
                    });
                }
                Ok(weights.iter().zip(x).map(|(w, v)| w * *v as f64).sum())
            }
        },
        _ => unreachable!("leaf_log_value called on an internal node"),
    }
}

/// Log-value of every reachable node, bottom-up. Unreachable nodes keep
/// `NEG_INFINITY`.
pub fn evaluate_nodes(graph: &SpnGraph, evidence: &Evidence) -> Result<Vec<f64>> {
    let order = graph.topo_order()?;
    let mut values = vec![f64::NEG_INFINITY; graph.node_count()];
    let mut terms: Vec<f64> = Vec::new();
    for &id in order {
        values[id.0] = match graph.node(id) {
            Node::Sum { children } => {
                terms.clear();
                for (child, w) in children {
                    if *w > 0.0 {
                        terms.push(w.ln() + values[child.0]);
                    }
                }
                log_sum_exp(&terms)
            }
            Node::Product { children } => children.iter().map(|c| values[c.0]).sum(),
            _ => leaf_log_value(graph, evidence, id)?,
        };
    }
    Ok(values)
}

/// log S[evidence] at the root. Zero-probability evidence yields
/// `NEG_INFINITY`, not an error.
pub fn evaluate(graph: &SpnGraph, evidence: &Evidence) -> Result<f64> {
    Ok(evaluate_nodes(graph, evidence)?[graph.root().0])
}

/// log S[*]: all indicators clamped to 1, features marginalized.
pub fn partition(graph: &SpnGraph) -> Result<f64> {
    evaluate(graph, &Evidence::marginal_for(graph))
}

/// Per-label log S[y, 1 | evidence]: the label indicator is clamped to each
/// class in turn, everything else taken from `base`. The argmax entry is the
/// predicted class.
pub fn class_scores(graph: &SpnGraph, base: &Evidence) -> Result<Vec<f64>> {
    let label = graph.label_variable();
    let classes = graph.num_classes();
    let mut scores = Vec::with_capacity(classes);
    let mut ev = base.clone();
    for y in 0..classes {
        ev.set_value(label, y, classes);
        scores.push(evaluate(graph, &ev)?);
    }
    Ok(scores)
}

/// Per-label log M[y, 1 | evidence] with sum nodes acting as weighted maxes,
/// the scoring route for hard-inference models.
pub fn class_scores_hard(graph: &SpnGraph, base: &Evidence) -> Result<Vec<f64>> {
    let label = graph.label_variable();
    let classes = graph.num_classes();
    let mut scores = Vec::with_capacity(classes);
    let mut ev = base.clone();
    for y in 0..classes {
        ev.set_value(label, y, classes);
        scores.push(crate::mpn::mpn_evaluate(graph, &ev)?.0);
    }
    Ok(scores)
}

/// Argmax with ties broken toward the lowest label.
pub fn predict(scores: &[f64]) -> usize {
    let mut best = 0;
    for (y, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = y;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::graph::{Node, NodeId, SpnGraph};

    pub const VAR_Y: usize = 0;
    pub const VAR_G: usize = 1;
    pub const VAR_P: usize = 2;

    /// Two-class naive-Bayes-shaped SPN over Bernoulli variables G and P:
    /// S = 0.2 (0.9 G + 0.1 Ḡ)(0.1 P + 0.9 P̄) + 0.8 (0.5 G + 0.5 Ḡ)(0.3 P + 0.7 P̄).
    pub fn fig2() -> SpnGraph {
        let nodes = vec![
            Node::Sum { children: vec![(NodeId(1), 0.2), (NodeId(2), 0.8)] },
            Node::Product { children: vec![NodeId(3), NodeId(4), NodeId(5)] },
            Node::Product { children: vec![NodeId(6), NodeId(7), NodeId(8)] },
            Node::Indicator { variable: VAR_Y, value: 0 },
            Node::Sum { children: vec![(NodeId(9), 0.9), (NodeId(10), 0.1)] },
            Node::Sum { children: vec![(NodeId(11), 0.1), (NodeId(12), 0.9)] },
            Node::Indicator { variable: VAR_Y, value: 1 },
            Node::Sum { children: vec![(NodeId(9), 0.5), (NodeId(10), 0.5)] },
            Node::Sum { children: vec![(NodeId(11), 0.3), (NodeId(12), 0.7)] },
            Node::Indicator { variable: VAR_G, value: 1 },
            Node::Indicator { variable: VAR_G, value: 0 },
            Node::Indicator { variable: VAR_P, value: 1 },
            Node::Indicator { variable: VAR_P, value: 0 },
        ];
        SpnGraph::new(nodes, NodeId(0), VAR_Y, 2).unwrap()
    }

    /// Three-class variant with class priors 0.2 / 0.408 / 0.392; classes 1
    /// and 2 share the conditional shape and differ only in prior.
    pub fn fig3a() -> SpnGraph {
        let g_weights = [(0.5, 0.5), (0.5, 0.5), (0.5, 0.5)];
        let p_weights = [(0.4, 0.6), (0.6, 0.4), (0.6, 0.4)];
        let mut nodes = vec![Node::Sum {
            children: vec![(NodeId(1), 0.2), (NodeId(2), 0.408), (NodeId(3), 0.392)],
        }];
        for c in 0..3 {
            let ind = 4 + c * 3;
            nodes.push(Node::Product {
                children: vec![NodeId(ind), NodeId(ind + 1), NodeId(ind + 2)],
            });
        }
        for c in 0..3 {
            nodes.push(Node::Indicator { variable: VAR_Y, value: c });
            nodes.push(Node::Sum {
                children: vec![(NodeId(13), g_weights[c].0), (NodeId(14), g_weights[c].1)],
            });
            nodes.push(Node::Sum {
                children: vec![(NodeId(15), p_weights[c].0), (NodeId(16), p_weights[c].1)],
            });
        }
        nodes.push(Node::Indicator { variable: VAR_G, value: 1 });
        nodes.push(Node::Indicator { variable: VAR_G, value: 0 });
        nodes.push(Node::Indicator { variable: VAR_P, value: 1 });
        nodes.push(Node::Indicator { variable: VAR_P, value: 0 });
        SpnGraph::new(nodes, NodeId(0), VAR_Y, 3).unwrap()
    }

    /// Evidence G=1, Ḡ=0, P=1, P̄=0 with the label marginalized.
    pub fn fig_evidence_gp(graph: &SpnGraph) -> crate::eval::Evidence {
        let mut ev = crate::eval::Evidence::marginal_for(graph);
        ev.set_binary(VAR_G, true).set_binary(VAR_P, true);
        ev
    }
}
