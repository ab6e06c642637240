//! Hard (max-product) inference: sum nodes become weighted maxes, and the
//! log-gradient along the winning path is c_i / w_i, with c_i the number of
//! times edge i appears on the winning branching path.

use crate::eval::Evidence;
use crate::graph::{Node, SpnGraph};
use crate::{Error, Result};

/// Winning structure of one max-product evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MpnTrace {
    /// Winning child slot per node (None for non-sum nodes and sums that
    /// never resolved, e.g. no positive-weight child).
    pub winners: Vec<Option<usize>>,
    /// c_i per sum edge: multiplicity of the edge on the winning path.
    pub path_counts: Vec<u32>,
    /// log M at the root.
    pub root_log_value: f64,
}

/// Bottom-up max-product evaluation. Ties at a sum node break toward the
/// lowest child NodeId, so repeated runs yield identical traces.
pub fn mpn_evaluate(graph: &SpnGraph, evidence: &Evidence) -> Result<(f64, MpnTrace)> {
    let order = graph.topo_order()?;
    let n = graph.node_count();
    let mut values = vec![f64::NEG_INFINITY; n];
    let mut winners: Vec<Option<usize>> = vec![None; n];

    for &id in order {
        match graph.node(id) {
            Node::Sum { children } => {
                let mut best: Option<(f64, usize, usize)> = None; // (value, child id, slot)
                for (slot, (child, w)) in children.iter().enumerate() {
                    let v = if *w > 0.0 {
                        w.ln() + values[child.0]
                    } else {
                        f64::NEG_INFINITY
                    };
                    let better = match best {
                        None => true,
                        Some((bv, bid, _)) => v > bv || (v == bv && child.0 < bid),
                    };
                    if better {
                        best = Some((v, child.0, slot));
                    }
                }
                if let Some((v, _, slot)) = best {
                    values[id.0] = v;
                    winners[id.0] = Some(slot);
                }
            }
            Node::Product { children } => {
                values[id.0] = children.iter().map(|c| values[c.0]).sum();
            }
            // leaves are valued exactly as in soft evaluation
            _ => {
                values[id.0] = crate::eval::leaf_log_value(graph, evidence, id)?;
            }
        }
    }

    let root_log_value = values[graph.root().0];

    // multiplicities along the winning subgraph, parents before children
    let mut mult = vec![0u64; n];
    mult[graph.root().0] = 1;
    let mut path_counts = vec![0u32; graph.weight_count()];
    let mut edge_offset = vec![usize::MAX; n];
    for (edge, (node, slot)) in graph.sum_edges().iter().enumerate() {
        if *slot == 0 {
            edge_offset[node.0] = edge;
        }
    }
    for &id in order.iter().rev() {
        if mult[id.0] == 0 {
            continue;
        }
        match graph.node(id) {
            Node::Sum { children } => {
                if let Some(slot) = winners[id.0] {
                    path_counts[edge_offset[id.0] + slot] += mult[id.0] as u32;
                    mult[children[slot].0 .0] += mult[id.0];
                }
            }
            Node::Product { children } => {
                for child in children {
                    mult[child.0] += mult[id.0];
                }
            }
            _ => {}
        }
    }

    Ok((root_log_value, MpnTrace { winners, path_counts, root_log_value }))
}

/// Gradient of log M per sum edge: c_i / w_i on the winning path, zero
/// elsewhere. Errors if a winning edge has non-positive weight.
pub fn mpn_log_gradient(graph: &SpnGraph, trace: &MpnTrace) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; graph.weight_count()];
    for (edge, count) in trace.path_counts.iter().enumerate() {
        if *count == 0 {
            continue;
        }
        let w = graph.weight(edge);
        if w <= 0.0 {
            return Err(Error::UndefinedGradient { edge, value: w });
        }
        grad[edge] = *count as f64 / w;
    }
    Ok(grad)
}
