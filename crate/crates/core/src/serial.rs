//! Line-oriented text format for SPN graphs.
//!
//! ```text
//! spn <node_count> <label_var> <C>
//! sum <child>:<weight> <child>:<weight> ...
//! prod <child> <child> ...
//! ind <var> <value>
//! feat <i> <j> <weights ...>
//! ```
//!
//! Node 0 is the root; one line per node in index order. Floats are printed
//! with 17 significant digits so the round trip is bit-faithful.

use std::fmt::Write as _;
use std::path::Path;

use crate::graph::{Node, NodeId, SpnGraph};
use crate::{Error, Result};

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a graph. If the root is not node 0 the nodes are permuted
/// (root first, everything else keeping relative order).
pub fn to_text(graph: &SpnGraph) -> String {
    let n = graph.node_count();
    // old -> new index map putting the root at 0
    let root = graph.root().0;
    let remap = |idx: usize| -> usize {
        if idx == root {
            0
        } else if idx < root {
            idx + 1
        } else {
            idx
        }
    };
    let mut lines: Vec<String> = vec![String::new(); n];
    for (idx, node) in graph.nodes().iter().enumerate() {
        let mut line = String::new();
        match node {
            Node::Sum { children } => {
                line.push_str("sum");
                for (child, w) in children {
                    write!(line, " {}:{}", remap(child.0), fmt_f64(*w)).unwrap();
                }
            }
            Node::Product { children } => {
                line.push_str("prod");
                for child in children {
                    write!(line, " {}", remap(child.0)).unwrap();
                }
            }
            Node::Indicator { variable, value } => {
                write!(line, "ind {variable} {value}").unwrap();
            }
            Node::Feature { i, j, weights } => {
                write!(line, "feat {i} {j}").unwrap();
                for w in weights {
                    write!(line, " {}", fmt_f64(*w)).unwrap();
                }
            }
        }
        lines[remap(idx)] = line;
    }
    let mut out = format!("spn {n} {} {}\n", graph.label_variable(), graph.num_classes());
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn from_text(text: &str) -> Result<SpnGraph> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::GraphText { line: 1, message: "empty input".into() })?;
    let mut parts = header.split_whitespace();
    let bad = |line: usize, message: &str| Error::GraphText { line, message: message.to_string() };
    if parts.next() != Some("spn") {
        return Err(bad(1, "expected `spn` header"));
    }
    let node_count: usize = parse_field(parts.next(), 1, "node count")?;
    let label_var: usize = parse_field(parts.next(), 1, "label variable")?;
    let classes: usize = parse_field(parts.next(), 1, "class count")?;

    let mut nodes = Vec::with_capacity(node_count);
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let node = match tokens.next() {
            Some("sum") => {
                let mut children = Vec::new();
                for tok in tokens {
                    let (child, weight) = tok
                        .split_once(':')
                        .ok_or_else(|| bad(lineno, "sum edge must be child:weight"))?;
                    let child: usize = child
                        .parse()
                        .map_err(|_| bad(lineno, "bad child index"))?;
                    let weight: f64 = weight
                        .parse()
                        .map_err(|_| bad(lineno, "bad edge weight"))?;
                    children.push((NodeId(child), weight));
                }
                Node::Sum { children }
            }
            Some("prod") => {
                let children = tokens
                    .map(|t| t.parse().map(NodeId).map_err(|_| bad(lineno, "bad child index")))
                    .collect::<Result<Vec<_>>>()?;
                Node::Product { children }
            }
            Some("ind") => {
                let variable = parse_field(tokens.next(), lineno, "variable")?;
                let value = parse_field(tokens.next(), lineno, "value")?;
                Node::Indicator { variable, value }
            }
            Some("feat") => {
                let i = parse_field(tokens.next(), lineno, "grid row")?;
                let j = parse_field(tokens.next(), lineno, "grid column")?;
                let weights = tokens
                    .map(|t| t.parse::<f64>().map_err(|_| bad(lineno, "bad feature weight")))
                    .collect::<Result<Vec<_>>>()?;
                Node::Feature { i, j, weights }
            }
            Some(other) => return Err(bad(lineno, &format!("unknown node kind `{other}`"))),
            None => continue,
        };
        nodes.push(node);
    }
    if nodes.len() != node_count {
        return Err(Error::GraphText {
            line: 1,
            message: format!("header declares {node_count} nodes, found {}", nodes.len()),
        });
    }
    SpnGraph::new(nodes, NodeId(0), label_var, classes)
}

pub fn save(graph: &SpnGraph, path: &Path) -> Result<()> {
    crate::features::write_atomic(path, to_text(graph).as_bytes())
}

pub fn load(path: &Path) -> Result<SpnGraph> {
    from_text(&std::fs::read_to_string(path)?)
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::GraphText { line, message: format!("missing or bad {what}") })
}
