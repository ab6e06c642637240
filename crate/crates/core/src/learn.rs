//! Discriminative training: the conditional log-likelihood baseline and the
//! maximum-margin square-hinge objective with L2 regularization, both driven
//! by per-sample SGD ascent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eval::{class_scores, evaluate, predict, Evidence};
use crate::grad::{cll_gradient, soft_backward};
use crate::graph::SpnGraph;
use crate::math::log_sum_exp;
use crate::mpn::{mpn_evaluate, mpn_log_gradient};
use crate::{Error, Result};

/// Weights are projected onto [WEIGHT_FLOOR, inf) after every update.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Which inference route drives margin gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inference {
    Soft,
    Hard,
}

/// All learning hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// SGD step size; decays as alpha / (1 + t/N) over updates t.
    pub alpha: f64,
    /// Softmax sharpness of the margin approximation, eta >= 1.
    pub eta: f64,
    /// Margin scale inside the hinge.
    pub lambda: f64,
    /// L2 coefficient.
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    pub inference: Inference,
    /// Per-sample gradient sup-norm cap. The 1/w shape of the inference
    /// gradients produces rare spikes that overshoot by orders of magnitude;
    /// rescaling the whole sample gradient (direction preserved) keeps SGD
    /// on the objective's actual scale. INFINITY disables.
    pub grad_clip: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 0.1,
            eta: 2.0,
            lambda: 1.0,
            beta: 0.0,
            epochs: 30,
            seed: 0,
            inference: Inference::Hard,
            grad_clip: 25.0,
        }
    }
}

impl TrainingConfig {
    fn check(&self) -> Result<()> {
        if self.eta < 1.0 {
            return Err(Error::BadEta(self.eta));
        }
        Ok(())
    }
}

/// One labeled training sample: evidence over the given variables plus its
/// class label. The label entry inside the evidence is ignored.
#[derive(Debug, Clone)]
pub struct Sample {
    pub evidence: Evidence,
    pub label: usize,
}

impl Sample {
    pub fn new(evidence: Evidence, label: usize) -> Self {
        Sample { evidence, label }
    }
}

/// Multi-class margin of one score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginResult {
    /// d = exp(D); greater than one iff correctly classified with margin.
    pub d: f64,
    /// Log margin: true score minus the best false score.
    pub log_d: f64,
    /// The false label achieving the max.
    pub runner_up: usize,
    /// All false labels scored zero; log_d is +inf.
    pub unopposed: bool,
}

/// Hard multi-class log margin: `log S[y^n] - max_{y != y^n} log S[y]`.
pub fn margin(scores: &[f64], true_label: usize) -> Result<MarginResult> {
    if scores.len() < 2 {
        return Err(Error::TooFewLabels(scores.len()));
    }
    if true_label >= scores.len() {
        return Err(Error::LabelOutOfRange { label: true_label, classes: scores.len() });
    }
    let mut runner_up = None;
    for (y, s) in scores.iter().enumerate() {
        if y == true_label {
            continue;
        }
        match runner_up {
            None => runner_up = Some((y, *s)),
            Some((_, best)) if *s > best => runner_up = Some((y, *s)),
            _ => {}
        }
    }
    let (runner_up, best_false) = runner_up.expect("at least one false label");
    let log_d = scores[true_label] - best_false;
    if best_false == f64::NEG_INFINITY {
        return Ok(MarginResult { d: f64::INFINITY, log_d: f64::INFINITY, runner_up, unopposed: true });
    }
    Ok(MarginResult { d: log_d.exp(), log_d, runner_up, unopposed: false })
}

/// Softmax-smoothed log margin:
/// `log S[y^n] - (1/eta) log sum_{y != y^n} S[y]^eta`.
pub fn soft_margin(scores: &[f64], true_label: usize, eta: f64) -> Result<f64> {
    if eta < 1.0 {
        return Err(Error::BadEta(eta));
    }
    if scores.len() < 2 {
        return Err(Error::TooFewLabels(scores.len()));
    }
    if true_label >= scores.len() {
        return Err(Error::LabelOutOfRange { label: true_label, classes: scores.len() });
    }
    let scaled: Vec<f64> = scores
        .iter()
        .enumerate()
        .filter(|(y, _)| *y != true_label)
        .map(|(_, s)| eta * s)
        .collect();
    let lse = log_sum_exp(&scaled);
    if lse == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(scores[true_label] - lse / eta)
}

/// Square hinge `h(m) = 1 - (m - 1)^2` below 1, else 1, with its derivative.
/// Continuous and differentiable at the knee.
pub fn square_hinge(margin_scaled: f64) -> (f64, f64) {
    if margin_scaled < 1.0 {
        (1.0 - (margin_scaled - 1.0).powi(2), -2.0 * (margin_scaled - 1.0))
    } else {
        (1.0, 0.0)
    }
}

/// Max-margin objective `H = sum_n h(lambda D^n) - beta ||w||^2` and its
/// per-weight gradient. The margin and its derivative both run through the
/// configured inference route; the regularizer applies in every branch.
pub fn mm_objective(
    graph: &SpnGraph,
    batch: &[Sample],
    config: &TrainingConfig,
) -> Result<(f64, Vec<f64>)> {
    config.check()?;
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = graph.num_classes();
    let label_var = graph.label_variable();
    let mut objective = 0.0;
    let mut grad = vec![0.0; graph.weight_count()];

    for sample in batch {
        if sample.label >= classes {
            return Err(Error::LabelOutOfRange { label: sample.label, classes });
        }
        // per-class passes under the chosen inference
        let mut scores = Vec::with_capacity(classes);
        let mut hard_grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(classes);
        let mut soft_tapes = Vec::with_capacity(classes);
        let mut ev = sample.evidence.clone();
        for y in 0..classes {
            ev.set_value(label_var, y, classes);
            match config.inference {
                Inference::Hard => {
                    let (log_m, trace) = mpn_evaluate(graph, &ev)?;
                    scores.push(log_m);
                    if log_m > f64::NEG_INFINITY {
                        hard_grads.push(Some(mpn_log_gradient(graph, &trace)?));
                    } else {
                        hard_grads.push(None);
                    }
                }
                Inference::Soft => {
                    let tape = soft_backward(graph, &ev)?;
                    scores.push(tape.root_log_value);
                    soft_tapes.push(tape);
                }
            }
        }
        if scores[sample.label] == f64::NEG_INFINITY {
            return Err(Error::ZeroLikelihood { label: sample.label });
        }

        let log_margin = soft_margin(&scores, sample.label, config.eta)?;
        let scaled = config.lambda * log_margin;
        let (h, dh) = square_hinge(scaled);
        objective += h;
        if dh == 0.0 {
            continue;
        }

        // dD/dw: true-label term minus the eta-softmax mixture over false
        // labels, each term being (1/value) d(value)/dw of its own pass.
        let eta = config.eta;
        let scaled_false: Vec<(usize, f64)> = (0..classes)
            .filter(|y| *y != sample.label)
            .map(|y| (y, eta * scores[y]))
            .collect();
        let lse = log_sum_exp(&scaled_false.iter().map(|(_, s)| *s).collect::<Vec<_>>());

        let log_grad_of = |y: usize| -> Option<Vec<f64>> {
            match config.inference {
                Inference::Hard => hard_grads[y].clone(),
                Inference::Soft => {
                    let tape = &soft_tapes[y];
                    if tape.degenerate {
                        return None;
                    }
                    let norm = tape.root_log_value.exp();
                    Some(tape.weight_grads.iter().map(|g| g / norm).collect())
                }
            }
        };

        let true_grad = log_grad_of(sample.label).expect("true-label value is non-zero");
        let coeff = dh * config.lambda;
        for (e, g) in true_grad.iter().enumerate() {
            grad[e] += coeff * g;
        }
        for (y, s) in &scaled_false {
            let mix = (s - lse).exp();
            if mix == 0.0 {
                continue;
            }
            if let Some(false_grad) = log_grad_of(*y) {
                for (e, g) in false_grad.iter().enumerate() {
                    grad[e] -= coeff * mix * g;
                }
            }
        }
    }

    if config.beta != 0.0 {
        objective -= config.beta * graph.weight_norm_sq();
        for (e, g) in grad.iter_mut().enumerate() {
            *g -= 2.0 * config.beta * graph.weight(e);
        }
    }
    Ok((objective, grad))
}

/// Objective value and per-weight gradient for the CLL baseline on a batch:
/// `sum_n log P(y^n | x^n) - beta ||w||^2`.
pub fn cll_objective(
    graph: &SpnGraph,
    batch: &[Sample],
    config: &TrainingConfig,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut objective = 0.0;
    let mut grad = vec![0.0; graph.weight_count()];
    for sample in batch {
        let mut clamped = sample.evidence.clone();
        clamped.set_value(graph.label_variable(), sample.label, graph.num_classes());
        let log_y = evaluate(graph, &clamped)?;
        let mut marginal = sample.evidence.clone();
        marginal.marginalize(graph.label_variable(), graph.num_classes());
        let log_all = evaluate(graph, &marginal)?;
        objective += log_y - log_all;
        for (e, g) in cll_gradient(graph, &sample.evidence, sample.label)?.iter().enumerate() {
            grad[e] += g;
        }
    }
    if config.beta != 0.0 {
        objective -= config.beta * graph.weight_norm_sq();
        for (e, g) in grad.iter_mut().enumerate() {
            *g -= 2.0 * config.beta * graph.weight(e);
        }
    }
    Ok((objective, grad))
}

/// One CSV row of training telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub objective: f64,
    pub train_accuracy: f64,
    pub weight_norm: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,objective,train_accuracy,weight_norm";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.objective, self.train_accuracy, self.weight_norm)
    }
}

/// Fraction of samples whose soft class-score argmax equals the label.
pub fn accuracy(graph: &SpnGraph, data: &[Sample]) -> Result<f64> {
    accuracy_with(graph, data, Inference::Soft)
}

/// Accuracy under an explicit inference route; hard-trained models are
/// scored through the max-product values they were trained on.
pub fn accuracy_with(graph: &SpnGraph, data: &[Sample], inference: Inference) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for sample in data {
        let scores = match inference {
            Inference::Soft => class_scores(graph, &sample.evidence)?,
            Inference::Hard => crate::eval::class_scores_hard(graph, &sample.evidence)?,
        };
        if predict(&scores) == sample.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// SGD ascent on the max-margin objective: per-sample updates in shuffled
/// order, weights floored after every step, one metrics row per epoch.
pub fn train_mm(
    graph: &mut SpnGraph,
    data: &[Sample],
    config: &TrainingConfig,
) -> Result<Vec<EpochMetrics>> {
    train_loop(graph, data, config, mm_objective, config.inference)
}

/// Same loop driven by the conditional log-likelihood gradient (marginal
/// inference, so its accuracy metric is soft as well).
pub fn train_cll(
    graph: &mut SpnGraph,
    data: &[Sample],
    config: &TrainingConfig,
) -> Result<Vec<EpochMetrics>> {
    train_loop(graph, data, config, cll_objective, Inference::Soft)
}

fn train_loop(
    graph: &mut SpnGraph,
    data: &[Sample],
    config: &TrainingConfig,
    objective: fn(&SpnGraph, &[Sample], &TrainingConfig) -> Result<(f64, Vec<f64>)>,
    metric_inference: Inference,
) -> Result<Vec<EpochMetrics>> {
    config.check()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for sample in data {
        if sample.label >= graph.num_classes() {
            return Err(Error::LabelOutOfRange {
                label: sample.label,
                classes: graph.num_classes(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);
    let n = data.len() as f64;
    let mut step_count = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let (h, mut grad) = objective(graph, &data[idx..idx + 1], config)?;
            if !h.is_finite() {
                return Err(Error::Diverged { sample: idx, epoch });
            }
            let sup = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            if sup > config.grad_clip {
                let scale = config.grad_clip / sup;
                for g in &mut grad {
                    *g *= scale;
                }
            }
            let step = config.alpha / (1.0 + step_count as f64 / n);
            for (e, g) in grad.iter().enumerate() {
                let w = graph.weight(e) + step * g;
                graph.set_weight(e, w.max(WEIGHT_FLOOR));
            }
            step_count += 1;
        }
        let (h, _) = objective(graph, data, config)?;
        metrics.push(EpochMetrics {
            epoch,
            objective: h,
            train_accuracy: accuracy_with(graph, data, metric_inference)?,
            weight_norm: graph.weight_norm_sq().sqrt(),
        });
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::fixtures;

    #[test]
    fn margin_on_fig2_scores() {
        let scores = [0.12f64.ln(), 0.018f64.ln()];
        let m = margin(&scores, 0).unwrap();
        assert!((m.d - 0.12 / 0.018).abs() < 1e-9);
        assert_eq!(m.runner_up, 1);
        assert!(!m.unopposed);
    }

    #[test]
    fn equal_scores_have_unit_margin() {
        let m = margin(&[1.5, 1.5, 1.5], 1).unwrap();
        assert_eq!(m.log_d, 0.0);
        assert_eq!(m.d, 1.0);
        assert_eq!(m.runner_up, 0, "tie breaks toward the lowest label");
    }

    #[test]
    fn margin_matches_pairwise_ratio_minimum() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let label = rng.gen_range(0..4);
            let m = margin(&scores, label).unwrap();
            let brute = (0..4)
                .filter(|y| *y != label)
                .map(|y| scores[label] - scores[y])
                .fold(f64::INFINITY, f64::min);
            assert!((m.log_d - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn unopposed_margin_is_flagged_infinite() {
        let m = margin(&[0.0, f64::NEG_INFINITY, f64::NEG_INFINITY], 0).unwrap();
        assert!(m.unopposed);
        assert_eq!(m.log_d, f64::INFINITY);
    }

    #[test]
    fn soft_margin_equals_hard_for_two_labels() {
        let scores = [0.7, -0.4];
        for eta in [1.0, 2.0, 8.0] {
            let soft = soft_margin(&scores, 0, eta).unwrap();
            let hard = margin(&scores, 0).unwrap().log_d;
            assert!((soft - hard).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_margin_gap_shrinks_with_eta() {
        let scores = [1.0, 0.5, 0.2, -0.3];
        let hard = margin(&scores, 0).unwrap().log_d;
        let mut last_gap = f64::INFINITY;
        for eta in [1.0, 2.0, 8.0, 64.0] {
            let soft = soft_margin(&scores, 0, eta).unwrap();
            let gap = hard - soft;
            assert!(gap >= -1e-12, "soft approaches from below");
            assert!(gap <= (scores.len() as f64 - 1.0).ln() / eta + 1e-12);
            assert!(gap <= last_gap + 1e-12);
            last_gap = gap;
        }
    }

    #[test]
    fn tied_false_scores_have_closed_form_soft_margin() {
        // m false labels tied at s: D - log(m)/eta
        let s = 0.3;
        let scores = [1.1, s, s, s];
        for eta in [1.0, 2.0, 64.0] {
            let soft = soft_margin(&scores, 0, eta).unwrap();
            let want = (1.1 - s) - (3.0f64).ln() / eta;
            assert!((soft - want).abs() < 1e-12);
        }
    }

    #[test]
    fn square_hinge_closed_form_points() {
        assert_eq!(square_hinge(1.0), (1.0, 0.0));
        assert_eq!(square_hinge(0.0), (0.0, 2.0));
        let (v, _) = square_hinge(0.5);
        assert!((v - 0.75).abs() < 1e-15);
        assert_eq!(square_hinge(3.0), (1.0, 0.0));
        // knee continuity from the left
        let (v, d) = square_hinge(1.0 - 1e-9);
        assert!((v - 1.0).abs() < 1e-15);
        assert!(d.abs() < 1e-8);
    }

    #[test]
    fn eta_below_one_is_rejected() {
        assert!(matches!(soft_margin(&[0.0, 1.0], 0, 0.5), Err(Error::BadEta(_))));
        let bad = TrainingConfig { eta: 0.5, ..Default::default() };
        let g = fixtures::fig2();
        let ev = Evidence::marginal_for(&g);
        let batch = [Sample::new(ev, 0)];
        assert!(mm_objective(&g, &batch, &bad).is_err());
    }

    #[test]
    fn saturated_batch_without_reg_has_zero_gradient() {
        // class 0 has overwhelming prior: every class-0 sample sits at
        // lambda*D >= 1 under hard inference
        let mut g = fixtures::fig2();
        g.set_weight(0, 50.0);
        let ev = fixtures::fig_evidence_gp(&g);
        let batch = [Sample::new(ev, 0)];
        let cfg = TrainingConfig { beta: 0.0, ..Default::default() };
        let (h, grad) = mm_objective(&g, &batch, &cfg).unwrap();
        assert_eq!(h, 1.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn saturated_batch_with_reg_leaves_only_decay() {
        let mut g = fixtures::fig2();
        g.set_weight(0, 50.0);
        let ev = fixtures::fig_evidence_gp(&g);
        let batch = [Sample::new(ev, 0)];
        let cfg = TrainingConfig { beta: 0.25, ..Default::default() };
        let (_, grad) = mm_objective(&g, &batch, &cfg).unwrap();
        for (e, g_e) in grad.iter().enumerate() {
            assert!((g_e + 2.0 * 0.25 * g.weight(e)).abs() < 1e-15);
        }
    }

    #[test]
    fn mm_gradient_matches_finite_difference_both_routes() {
        for inference in [Inference::Hard, Inference::Soft] {
            let g = fixtures::fig3a();
            let ev = fixtures::fig_evidence_gp(&g);
            let batch = [Sample::new(ev, 2)]; // runner-up pressure on class 2
            let cfg = TrainingConfig { beta: 0.01, inference, ..Default::default() };
            let (_, grad) = mm_objective(&g, &batch, &cfg).unwrap();
            let h = 1e-6;
            for edge in 0..g.weight_count() {
                let mut gp = g.clone();
                let w = gp.weight(edge);
                gp.set_weight(edge, w + h);
                let (up, _) = mm_objective(&gp, &batch, &cfg).unwrap();
                gp.set_weight(edge, w - h);
                let (down, _) = mm_objective(&gp, &batch, &cfg).unwrap();
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (grad[edge] - fd).abs() <= 1e-4 * fd.abs().max(1e-4),
                    "{inference:?} edge {edge}: analytic {} vs fd {fd}",
                    grad[edge]
                );
            }
        }
    }

    #[test]
    fn zero_alpha_leaves_weights_unchanged() {
        let mut g = fixtures::fig3a();
        let before = g.weights();
        let ev = fixtures::fig_evidence_gp(&g);
        let data = [Sample::new(ev.clone(), 1), Sample::new(ev, 0)];
        let cfg = TrainingConfig { alpha: 0.0, epochs: 3, ..Default::default() };
        let metrics = train_mm(&mut g, &data, &cfg).unwrap();
        assert_eq!(g.weights(), before);
        assert_eq!(metrics.len(), 3);
        assert_eq!(metrics[0].train_accuracy, metrics[2].train_accuracy);
    }

    #[test]
    fn huge_beta_on_saturated_batch_decays_weights_monotonically() {
        let mut g = fixtures::fig2();
        g.set_weight(0, 50.0);
        let ev = fixtures::fig_evidence_gp(&g);
        let data = [Sample::new(ev, 0)];
        // keep alpha small so the decay step stays positive
        let cfg = TrainingConfig { beta: 1e3, alpha: 1e-5, epochs: 4, ..Default::default() };
        let metrics = train_mm(&mut g, &data, &cfg).unwrap();
        for pair in metrics.windows(2) {
            assert!(pair[1].weight_norm < pair[0].weight_norm);
        }
    }

    #[test]
    fn one_class_dataset_leaves_cll_training_fixed() {
        use crate::graph::{Node, NodeId, SpnGraph};
        let nodes = vec![
            Node::Sum { children: vec![(NodeId(1), 0.7)] },
            Node::Product { children: vec![NodeId(2), NodeId(3)] },
            Node::Indicator { variable: 0, value: 0 },
            Node::Indicator { variable: 1, value: 1 },
        ];
        let mut g = SpnGraph::new(nodes, NodeId(0), 0, 1).unwrap();
        let before = g.weights();
        let mut ev = Evidence::marginal_for(&g);
        ev.set_binary(1, true);
        let data = [Sample::new(ev, 0)];
        let cfg = TrainingConfig { epochs: 2, ..Default::default() };
        train_cll(&mut g, &data, &cfg).unwrap();
        assert_eq!(g.weights(), before);
    }

    #[test]
    fn cll_objective_gradient_matches_finite_difference() {
        let g = fixtures::fig2();
        let ev = fixtures::fig_evidence_gp(&g);
        let batch = [Sample::new(ev, 1)];
        let cfg = TrainingConfig::default();
        let (_, grad) = cll_objective(&g, &batch, &cfg).unwrap();
        let h = 1e-6;
        for edge in 0..g.weight_count() {
            let mut gp = g.clone();
            let w = gp.weight(edge);
            gp.set_weight(edge, w + h);
            let (up, _) = cll_objective(&gp, &batch, &cfg).unwrap();
            gp.set_weight(edge, w - h);
            let (down, _) = cll_objective(&gp, &batch, &cfg).unwrap();
            let fd = (up - down) / (2.0 * h);
            assert!((grad[edge] - fd).abs() <= 1e-5 * fd.abs().max(1e-6));
        }
    }

    #[test]
    fn scaling_root_weights_preserves_argmax() {
        let g = fixtures::fig3a();
        let ev = fixtures::fig_evidence_gp(&g);
        let before = class_scores(&g, &ev).unwrap();
        let mut scaled = g.clone();
        for edge in 0..3 {
            let w = scaled.weight(edge);
            scaled.set_weight(edge, w * 7.3);
        }
        let after = class_scores(&scaled, &ev).unwrap();
        assert_eq!(predict(&before), predict(&after));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut g = fixtures::fig2();
        let cfg = TrainingConfig::default();
        assert!(matches!(train_mm(&mut g, &[], &cfg), Err(Error::EmptyDataset)));
    }
}
