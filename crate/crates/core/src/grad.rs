//! Soft (marginal) inference gradients with respect to sum-edge weights,
//! by backpropagation over the DAG.
//!
//! All intermediates are non-negative, so adjoints are carried as
//! log-magnitudes and accumulated with log-add; the per-edge partials are
//! exponentiated into linear domain at the end.

use crate::eval::{evaluate_nodes, Evidence};
use crate::graph::{Node, SpnGraph};
use crate::math::log_add;
use crate::{Error, Result};

/// Forward values, adjoints and per-sum-edge partials from one
/// forward+backward pass.
#[derive(Debug, Clone)]
pub struct GradientTape {
    /// Per-node log-values from the forward pass.
    pub log_values: Vec<f64>,
    /// Per-node log of dS/dS_i (the root's adjoint is 0 = log 1).
    pub log_adjoints: Vec<f64>,
    /// dS/dw per sum edge, linear domain, aligned with `graph.sum_edges()`.
    pub weight_grads: Vec<f64>,
    /// log S at the root for this evidence.
    pub root_log_value: f64,
    /// True when the root evaluated to zero; gradients are all zero then.
    pub degenerate: bool,
}

/// Forward pass followed by adjoint backpropagation.
///
/// Sum node i with child j: adjoint(j) += w_ij * adjoint(i), and
/// dS/dw_ij = S_j * adjoint(i). Product node i: each child j receives
/// adjoint(i) times the product of its siblings' values.
pub fn soft_backward(graph: &SpnGraph, evidence: &Evidence) -> Result<GradientTape> {
    let log_values = evaluate_nodes(graph, evidence)?;
    let root_log_value = log_values[graph.root().0];
    let n = graph.node_count();
    let mut weight_grads = vec![0.0; graph.weight_count()];
    if root_log_value == f64::NEG_INFINITY {
        // zero-probability evidence: flag and return zero gradients
        return Ok(GradientTape {
            log_values,
            log_adjoints: vec![f64::NEG_INFINITY; n],
            weight_grads,
            root_log_value,
            degenerate: true,
        });
    }

    let mut log_adjoints = vec![f64::NEG_INFINITY; n];
    log_adjoints[graph.root().0] = 0.0;

    // per-node offset into the flat sum-edge enumeration
    let mut edge_offset = vec![usize::MAX; n];
    for (edge, (node, slot)) in graph.sum_edges().iter().enumerate() {
        if *slot == 0 {
            edge_offset[node.0] = edge;
        }
    }

    // parents before children
    let order = graph.topo_order()?;
    for &id in order.iter().rev() {
        let adj = log_adjoints[id.0];
        match graph.node(id) {
            Node::Sum { children } => {
                for (slot, (child, w)) in children.iter().enumerate() {
                    // dS/dw = S_child * adjoint, defined even when w = 0
                    if adj > f64::NEG_INFINITY {
                        weight_grads[edge_offset[id.0] + slot] =
                            (log_values[child.0] + adj).exp();
                    }
                    if *w > 0.0 && adj > f64::NEG_INFINITY {
                        let contribution = w.ln() + adj;
                        log_adjoints[child.0] = log_add(log_adjoints[child.0], contribution);
                    }
                }
            }
            Node::Product { children } => {
                if adj == f64::NEG_INFINITY {
                    continue;
                }
                // product of siblings = total / own value, handled by
                // counting zero-valued children instead of dividing
                let zero_children =
                    children.iter().filter(|c| log_values[c.0] == f64::NEG_INFINITY).count();
                match zero_children {
                    0 => {
                        let total: f64 = children.iter().map(|c| log_values[c.0]).sum();
                        for child in children {
                            let contribution = adj + total - log_values[child.0];
                            log_adjoints[child.0] = log_add(log_adjoints[child.0], contribution);
                        }
                    }
                    1 => {
                        let survivor = children
                            .iter()
                            .find(|c| log_values[c.0] == f64::NEG_INFINITY)
                            .expect("counted one zero child");
                        let total: f64 = children
                            .iter()
                            .filter(|c| c.0 != survivor.0)
                            .map(|c| log_values[c.0])
                            .sum();
                        log_adjoints[survivor.0] = log_add(log_adjoints[survivor.0], adj + total);
                    }
                    _ => {} // every sibling product is zero
                }
            }
            _ => {}
        }
    }

    Ok(GradientTape {
        log_values,
        log_adjoints,
        weight_grads,
        root_log_value,
        degenerate: false,
    })
}

/// Gradient of the conditional log-likelihood log P(y | x) with respect to
/// every sum-edge weight: the label-clamped pass minus the label-marginal
/// pass, each normalized by its own root value.
pub fn cll_gradient(graph: &SpnGraph, evidence: &Evidence, label: usize) -> Result<Vec<f64>> {
    let classes = graph.num_classes();
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let label_var = graph.label_variable();

    let mut clamped = evidence.clone();
    clamped.set_value(label_var, label, classes);
    let tape_y = soft_backward(graph, &clamped)?;
    if tape_y.degenerate {
        return Err(Error::ZeroLikelihood { label });
    }

    let mut marginal = evidence.clone();
    marginal.marginalize(label_var, classes);
    let tape_all = soft_backward(graph, &marginal)?;

    let grad = tape_y
        .weight_grads
        .iter()
        .zip(&tape_all.weight_grads)
        .map(|(gy, gall)| {
            gy / tape_y.root_log_value.exp() - gall / tape_all.root_log_value.exp()
        })
        .collect();
    Ok(grad)
}
