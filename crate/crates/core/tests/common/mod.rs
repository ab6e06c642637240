//! Shared test machinery: random valid SPN generation, naive reference
//! evaluators (the independent oracles), and synthetic datasets.

#![allow(dead_code)]

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tspn_core::eval::Evidence;
use tspn_core::features::FeatureTensor;
use tspn_core::graph::{Node, NodeId, SpnGraph};
use tspn_core::learn::Sample;

/// Builder for random complete-and-decomposable SPNs over binary variables.
/// Variable 0 is the class label (binary).
pub struct RandomSpn {
    pub nodes: Vec<Node>,
    rng: ChaCha8Rng,
    max_fanout: usize,
}

impl RandomSpn {
    pub fn generate(num_vars: usize, seed: u64) -> SpnGraph {
        Self::generate_sized(num_vars, seed, 3)
    }

    /// Recursive scope-splitting construction: a sum mixes products, each
    /// product partitions the scope, singleton scopes become indicator
    /// mixtures. Complete and decomposable by construction.
    pub fn generate_sized(num_vars: usize, seed: u64, max_fanout: usize) -> SpnGraph {
        assert!(num_vars >= 1);
        let mut builder =
            RandomSpn { nodes: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed), max_fanout };
        let scope: Vec<usize> = (0..num_vars).collect();
        let root = builder.sum_over(&scope);
        let nodes = builder.nodes;
        SpnGraph::new(nodes, root, 0, 2).expect("generator produces well-formed graphs")
    }

    fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    fn weight(&mut self) -> f64 {
        self.rng.gen_range(0.1..2.0)
    }

    fn sum_over(&mut self, scope: &[usize]) -> NodeId {
        if scope.len() == 1 {
            let var = scope[0];
            let pos = self.push(Node::Indicator { variable: var, value: 1 });
            let neg = self.push(Node::Indicator { variable: var, value: 0 });
            let children = vec![(pos, self.weight()), (neg, self.weight())];
            return self.push(Node::Sum { children });
        }
        let fanout = self.rng.gen_range(1..=self.max_fanout);
        let mut children = Vec::with_capacity(fanout);
        for _ in 0..fanout {
            let product = self.product_over(scope);
            children.push((product, self.weight()));
        }
        self.push(Node::Sum { children })
    }

    fn product_over(&mut self, scope: &[usize]) -> NodeId {
        let mut shuffled = scope.to_vec();
        shuffled.shuffle(&mut self.rng);
        let blocks = self.rng.gen_range(2..=shuffled.len().min(3));
        let mut children = Vec::with_capacity(blocks);
        let mut start = 0;
        for b in 0..blocks {
            let remaining = shuffled.len() - start;
            let blocks_left = blocks - b;
            let take = if blocks_left == 1 {
                remaining
            } else {
                self.rng.gen_range(1..=remaining - (blocks_left - 1))
            };
            let mut block = shuffled[start..start + take].to_vec();
            block.sort_unstable();
            start += take;
            children.push(self.sum_over(&block));
        }
        self.push(Node::Product { children })
    }
}

/// Complete 0/1 evidence for the given assignment bits, over `num_vars`
/// binary variables.
pub fn assignment_evidence(graph: &SpnGraph, bits: u64, num_vars: usize) -> Evidence {
    let mut ev = Evidence::marginal_for(graph);
    for var in 0..num_vars {
        ev.set_binary(var, (bits >> var) & 1 == 1);
    }
    ev
}

/// Naive linear-domain recursive evaluator; the structural reference for
/// both soft and max-product semantics. Entirely independent of the
/// log-domain production path.
pub fn naive_value(graph: &SpnGraph, evidence: &Evidence, max_product: bool) -> f64 {
    fn rec(graph: &SpnGraph, values: &mut Vec<Option<f64>>, ev: &Evidence, id: NodeId, mp: bool) -> f64 {
        if let Some(v) = values[id.0] {
            return v;
        }
        let v = match graph.node(id) {
            Node::Sum { children } => {
                let terms = children.iter().map(|(c, w)| w * rec(graph, values, ev, *c, mp));
                if mp {
                    terms.fold(f64::NEG_INFINITY, f64::max)
                } else {
                    terms.sum()
                }
            }
            Node::Product { children } => {
                children.iter().map(|c| rec(graph, values, ev, *c, mp)).product()
            }
            Node::Indicator { variable, value } => {
                ev.indicator_value(*variable, *value).expect("complete evidence")
            }
            Node::Feature { i, j, weights } => match ev.features() {
                None => 1.0,
                Some(t) => {
                    let x = t.at(*i, *j).expect("position in range");
                    weights.iter().zip(x).map(|(w, v)| w * *v as f64).sum::<f64>().exp()
                }
            },
        };
        values[id.0] = Some(v);
        v
    }
    let mut values = vec![None; graph.node_count()];
    rec(graph, &mut values, evidence, graph.root(), max_product)
}

/// Exhaustive-enumeration partition oracle: sums the naive linear value over
/// every complete assignment of `num_vars` binary variables.
pub fn enumeration_partition(graph: &SpnGraph, num_vars: usize) -> f64 {
    let mut total = 0.0;
    for bits in 0..(1u64 << num_vars) {
        let ev = assignment_evidence(graph, bits, num_vars);
        total += naive_value(graph, &ev, false);
    }
    total
}

/// Exhaustive max-completion oracle for the MPN value: max over completions
/// of the free variables of the naive max-product value.
pub fn max_completion(graph: &SpnGraph, evidence_bits: &[(usize, bool)], num_vars: usize) -> f64 {
    let fixed: std::collections::BTreeMap<usize, bool> = evidence_bits.iter().copied().collect();
    let free: Vec<usize> = (0..num_vars).filter(|v| !fixed.contains_key(v)).collect();
    let mut best = f64::NEG_INFINITY;
    for bits in 0..(1u64 << free.len()) {
        let mut ev = Evidence::marginal_for(graph);
        for (var, value) in &fixed {
            ev.set_binary(*var, *value);
        }
        for (slot, var) in free.iter().enumerate() {
            ev.set_binary(*var, (bits >> slot) & 1 == 1);
        }
        best = best.max(naive_value(graph, &ev, true));
    }
    best
}

/// Brute-force per-class scores: for each label, enumerate the non-label
/// free variables and sum the naive values.
pub fn brute_class_scores(graph: &SpnGraph, given: &[(usize, bool)], num_vars: usize) -> Vec<f64> {
    let fixed: std::collections::BTreeMap<usize, bool> = given.iter().copied().collect();
    let label_var = graph.label_variable();
    let free: Vec<usize> =
        (1..num_vars).filter(|v| !fixed.contains_key(v) && *v != label_var).collect();
    (0..graph.num_classes())
        .map(|y| {
            let mut total = 0.0;
            for bits in 0..(1u64 << free.len()) {
                let mut ev = Evidence::marginal_for(graph);
                ev.set_value(label_var, y, graph.num_classes());
                for (var, value) in &fixed {
                    ev.set_binary(*var, *value);
                }
                for (slot, var) in free.iter().enumerate() {
                    ev.set_binary(*var, (bits >> slot) & 1 == 1);
                }
                total += naive_value(graph, &ev, false);
            }
            total
        })
        .collect()
}

/// Parameters of the synthetic confusable dataset: tri-modal classes over
/// sparse prototype activations, classes 1 and 2 the confusable pair.
pub struct SyntheticSpec {
    pub samples: usize,
    pub grid: usize,
    pub codebook: usize,
    pub noise: f64,
    pub confusable_gap: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { samples: 600, grid: 2, codebook: 16, noise: 0.2, confusable_gap: 1.0 }
    }
}

/// Draws the 3-class dataset. Class 1 anchors the geometry: class 2 is a
/// small sparse perturbation of its modes (the confusable pair), class 0 a
/// blend of fresh structure with class 1 (separable, but the group boundary
/// still has to be learned).
pub fn synthetic_confusable(spec: &SyntheticSpec, seed: u64) -> Vec<(Arc<FeatureTensor>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.grid * spec.grid * spec.codebook;
    let modes = 3usize;
    let mut sparse_mean = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim)
            .map(|_| if rng.gen::<f64>() < 0.3 { rng.gen_range(0.5..1.5) } else { 0.0 })
            .collect()
    };
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
                m[d] = (m[d] + rng.gen_range(-spec.confusable_gap..spec.confusable_gap)).max(0.0);
            }
            m
        })
        .collect();
    let class_modes = [blended, anchor, shifted];

    let mut data = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let label = i % 3;
        let mode = &class_modes[label][rng.gen_range(0..modes)];
        let values: Vec<f32> = mode
            .iter()
            .map(|m| {
                let noise: f64 = rng.sample(rand_distr::StandardNormal);
                (m + spec.noise * noise).max(0.0) as f32
            })
            .collect();
        data.push((Arc::new(FeatureTensor::new(spec.grid, spec.codebook, values)), label));
    }
    data
}

/// Wraps tensors into learnable samples for the given graph.
pub fn to_samples(graph: &SpnGraph, data: &[(Arc<FeatureTensor>, usize)]) -> Vec<Sample> {
    data.iter()
        .map(|(tensor, label)| {
            Sample::new(Evidence::for_features(graph, Arc::clone(tensor)), *label)
        })
        .collect()
}

/// Deterministic train/test split by index parity stride, balanced per class
/// because labels cycle round-robin in the generator.
pub fn split_train_test(
    data: &[(Arc<FeatureTensor>, usize)],
    test_every: usize,
) -> (Vec<(Arc<FeatureTensor>, usize)>, Vec<(Arc<FeatureTensor>, usize)>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, item) in data.iter().enumerate() {
        if i % test_every == test_every - 1 {
            test.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    (train, test)
}

/// The two-variable, two-class network from the worked example, including
/// its label indicators.
pub fn fig2() -> SpnGraph {
    let nodes = vec![
        Node::Sum { children: vec![(NodeId(1), 0.2), (NodeId(2), 0.8)] },
        Node::Product { children: vec![NodeId(3), NodeId(4), NodeId(5)] },
        Node::Product { children: vec![NodeId(6), NodeId(7), NodeId(8)] },
        Node::Indicator { variable: 0, value: 0 },
        Node::Sum { children: vec![(NodeId(9), 0.9), (NodeId(10), 0.1)] },
        Node::Sum { children: vec![(NodeId(11), 0.1), (NodeId(12), 0.9)] },
        Node::Indicator { variable: 0, value: 1 },
        Node::Sum { children: vec![(NodeId(9), 0.5), (NodeId(10), 0.5)] },
        Node::Sum { children: vec![(NodeId(11), 0.3), (NodeId(12), 0.7)] },
        Node::Indicator { variable: 1, value: 1 },
        Node::Indicator { variable: 1, value: 0 },
        Node::Indicator { variable: 2, value: 1 },
        Node::Indicator { variable: 2, value: 0 },
    ];
    SpnGraph::new(nodes, NodeId(0), 0, 2).unwrap()
}

/// Three-class sibling of [`fig2`] with priors 0.2 / 0.408 / 0.392.
pub fn fig3a() -> SpnGraph {
    let g_weights = [(0.5, 0.5), (0.5, 0.5), (0.5, 0.5)];
    let p_weights = [(0.4, 0.6), (0.6, 0.4), (0.6, 0.4)];
    let mut nodes = vec![Node::Sum {
        children: vec![(NodeId(1), 0.2), (NodeId(2), 0.408), (NodeId(3), 0.392)],
    }];
    for c in 0..3 {
        let ind = 4 + c * 3;
        nodes.push(Node::Product { children: vec![NodeId(ind), NodeId(ind + 1), NodeId(ind + 2)] });
    }
    for c in 0..3 {
        nodes.push(Node::Indicator { variable: 0, value: c });
        nodes.push(Node::Sum {
            children: vec![(NodeId(13), g_weights[c].0), (NodeId(14), g_weights[c].1)],
        });
        nodes.push(Node::Sum {
            children: vec![(NodeId(15), p_weights[c].0), (NodeId(16), p_weights[c].1)],
        });
    }
    nodes.push(Node::Indicator { variable: 1, value: 1 });
    nodes.push(Node::Indicator { variable: 1, value: 0 });
    nodes.push(Node::Indicator { variable: 2, value: 1 });
    nodes.push(Node::Indicator { variable: 2, value: 0 });
    SpnGraph::new(nodes, NodeId(0), 0, 3).unwrap()
}

/// Evidence G=1, Ḡ=0, P=1, P̄=0 with the label marginalized, for the
/// worked-example graphs.
pub fn evidence_gp(graph: &SpnGraph) -> Evidence {
    let mut ev = Evidence::marginal_for(graph);
    ev.set_binary(1, true).set_binary(2, true);
    ev
}
