//! Per-record explanations from the trained edge scorer, and their
//! evaluation against reference annotations.
//!
//! Interpretation conditions the edge scorer on the model's own output: the
//! conditional vector is the class probabilities concatenated with the
//! gradient of the top-class logit with respect to the graph embedding.
//! Edge scores under that conditioning become node importances (max over
//! incident edges, min-max rescaled per graph), and each node's time
//! interval becomes a candidate salient segment.
//!
//! Match rate asks whether the top-1 segment, widened by a tolerance on
//! both sides, intersects a reference interval; sweeping the tolerance
//! yields a monotone curve.

pub mod render;

use crate::classify::ClassifierHead;
use crate::encoder::encode_on_tape;
use crate::error::{Result, VarsError};
use crate::graphcon::{build_graph_with, EcgGraph};
use crate::model::ModelState;
use crate::numerics::{Tape, Tensor};
use crate::par::par_map;
use crate::signal::EcgRecord;
use crate::subgraph::edge_scores;
use crate::train::Checkpoint;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TAU_SALIENCY: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lead: usize,
    pub start_sec: f64,
    pub end_sec: f64,
    pub importance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub record_id: String,
    /// Class probabilities from the head.
    pub prediction: Vec<f64>,
    /// Per-node importance in [0, 1], node order matching the graph.
    pub node_importance: Vec<f64>,
    /// Directed edges of the thresholded graph.
    pub edges: Vec<(usize, usize)>,
    /// Conditioned scorer output per edge, aligned with `edges`.
    pub edge_scores: Vec<f64>,
    /// One segment per node, in node order.
    pub segments: Vec<Segment>,
    /// Segments at importance >= tau_saliency, best first.
    pub salient_segments: Vec<Segment>,
    pub top1_segment: Segment,
    pub tau_saliency: f64,
    pub top_k: Option<usize>,
}

/// A hand-annotated salient interval for one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAnnotation {
    pub record_id: String,
    pub start_sec: f64,
    pub end_sec: f64,
}

impl ReferenceAnnotation {
    pub fn validate(&self) -> Result<()> {
        if !(self.start_sec >= 0.0 && self.start_sec < self.end_sec) {
            return Err(VarsError::Contract(format!(
                "annotation for {}: need 0 <= start < end, got [{}, {}]",
                self.record_id, self.start_sec, self.end_sec
            )));
        }
        Ok(())
    }
}

/// Max over incident edge scores, then per-graph min-max rescale. A graph
/// whose raw importances are constant (including the no-edge case) maps
/// every node to 1.
pub fn node_importance(n: usize, edges: &[(usize, usize)], scores: &[f64]) -> Vec<f64> {
    let mut raw = vec![0.0f64; n];
    for (e, &(i, j)) in edges.iter().enumerate() {
        raw[i] = raw[i].max(scores[e]);
        raw[j] = raw[j].max(scores[e]);
    }
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![1.0; n];
    }
    raw.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

fn sort_best_first(segments: &mut [Segment]) {
    segments.sort_by(|a, b| {
        b.importance
            .partial_cmp(&a.importance)
            .expect("finite importance")
            .then(a.lead.cmp(&b.lead))
            .then(a.start_sec.partial_cmp(&b.start_sec).expect("finite time"))
    });
}

/// Segments at importance >= tau_sal, best first, truncated to top_k when set.
pub fn salient_segments(
    expl: &Explanation,
    tau_sal: f64,
    top_k: Option<usize>,
) -> Result<Vec<Segment>> {
    if !(0.0..=1.0).contains(&tau_sal) {
        return Err(VarsError::Config(format!(
            "saliency threshold must lie in [0, 1], got {tau_sal}"
        )));
    }
    let mut out: Vec<Segment> = expl
        .segments
        .iter()
        .filter(|s| s.importance >= tau_sal)
        .cloned()
        .collect();
    sort_best_first(&mut out);
    if let Some(k) = top_k {
        out.truncate(k);
    }
    Ok(out)
}

/// Gradient of the top-class logit with respect to the embedding, [1 x h].
fn top_logit_gradient(head: &ClassifierHead, z: &Tensor, top: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let zv = tape.leaf(z.clone());
    let w1 = tape.leaf(head.w1.clone());
    let b1 = tape.leaf(head.b1.clone());
    let w2 = tape.leaf(head.w2.clone());
    let b2 = tape.leaf(head.b2.clone());
    let a1 = tape.matmul(zv, w1)?;
    let a1b = tape.add_row_broadcast(a1, b1)?;
    let hid = tape.relu(a1b)?;
    let a2 = tape.matmul(hid, w2)?;
    let logits = tape.add_row_broadcast(a2, b2)?;
    let mut pick = Tensor::zeros(vec![1, head.info.classes]);
    pick.set(0, top, 1.0);
    let masked = tape.mul_const_mask(logits, &pick)?;
    let scalar = tape.sum_all(masked)?;
    let grads = tape.backward(scalar)?;
    Ok(grads.get_or_zeros(zv, z.shape()))
}

/// Builds the interpretation-time conditional: probabilities concatenated
/// with the top-logit gradient, then zero-padded or tail-truncated to the
/// scorer's conditional dimension. Matching dimensions pass through as-is.
pub fn assemble_conditional(probs: &[f64], grad: &[f64], cond_dim: usize) -> Tensor {
    let mut data: Vec<f64> = probs.iter().chain(grad).cloned().collect();
    data.resize(cond_dim, 0.0);
    Tensor::new(vec![1, cond_dim], data).expect("conditional shape")
}

fn encode_graph(model: &ModelState, graph: &EcgGraph) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let layers: Vec<_> = model
        .autoenc
        .encoder
        .iter()
        .map(|l| l.on_tape(&mut tape))
        .collect();
    let a = tape.leaf(graph.a.clone());
    let x = tape.leaf(graph.x.clone());
    let (h, z) = encode_on_tape(&mut tape, &layers, a, x)?;
    Ok((tape.value(h).clone(), tape.value(z).clone()))
}

pub fn explain(ckpt: &Checkpoint, record: &EcgRecord) -> Result<Explanation> {
    explain_with(ckpt, record, DEFAULT_TAU_SALIENCY, None)
}

pub fn explain_with(
    ckpt: &Checkpoint,
    record: &EcgRecord,
    tau_sal: f64,
    top_k: Option<usize>,
) -> Result<Explanation> {
    if !(0.0..=1.0).contains(&tau_sal) {
        return Err(VarsError::Config(format!(
            "saliency threshold must lie in [0, 1], got {tau_sal}"
        )));
    }
    let head = ClassifierHead::from_checkpoint(ckpt)?;
    let model = ckpt.model()?;
    let graph = build_graph_with(
        record,
        &ckpt.config.patch_config(),
        &model.attention,
        &ckpt.config.sparsify_rule(),
    )?;
    let (h, z) = encode_graph(&model, &graph)?;
    let probs = head.forward(&z)?;
    let prediction = probs.row(0).to_vec();
    let top = prediction
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
        .expect("at least two classes")
        .0;
    let grad = top_logit_gradient(&head, &z, top)?;
    let p = assemble_conditional(&prediction, grad.row(0), model.cond_dim());

    let edges = graph.edges();
    let scores = if edges.is_empty() {
        Vec::new()
    } else {
        edge_scores(&model.subgraph, &h, &edges, &p)?
    };
    let importance = node_importance(graph.num_nodes(), &edges, &scores);

    let segments: Vec<Segment> = graph
        .meta
        .iter()
        .zip(&importance)
        .map(|(meta, &imp)| Segment {
            lead: meta.lead,
            start_sec: meta.start_sec,
            end_sec: meta.end_sec,
            importance: imp,
        })
        .collect();
    let top1_segment = {
        let mut best = segments.clone();
        sort_best_first(&mut best);
        best[0]
    };

    let mut expl = Explanation {
        record_id: record.record_id.clone(),
        prediction,
        node_importance: importance,
        edges,
        edge_scores: scores,
        segments,
        salient_segments: Vec::new(),
        top1_segment,
        tau_saliency: tau_sal,
        top_k,
    };
    expl.salient_segments = salient_segments(&expl, tau_sal, top_k)?;
    Ok(expl)
}

/// Explains many records in parallel, record order preserved.
pub fn explain_batch(ckpt: &Checkpoint, records: &[EcgRecord]) -> Result<Vec<Explanation>> {
    explain_batch_with(ckpt, records, DEFAULT_TAU_SALIENCY, None)
}

pub fn explain_batch_with(
    ckpt: &Checkpoint,
    records: &[EcgRecord],
    tau_sal: f64,
    top_k: Option<usize>,
) -> Result<Vec<Explanation>> {
    par_map(records, |r| explain_with(ckpt, r, tau_sal, top_k))
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// Matches over explanations that had a reference.
    pub rate: f64,
    pub matched: usize,
    pub total: usize,
    /// Explanations excluded because no reference carried their record id.
    pub missing_reference: Vec<String>,
}

fn intervals_touch(a0: f64, a1: f64, b0: f64, b1: f64) -> bool {
    a0 <= b1 && b0 <= a1
}

/// True if the top-1 segment widened by `tol` on each side touches any
/// reference interval carrying the explanation's record id. `None` when no
/// reference carries that id.
fn top1_hits_any(
    expl: &Explanation,
    references: &[ReferenceAnnotation],
    tol: f64,
) -> Option<bool> {
    let mut found = false;
    let seg = &expl.top1_segment;
    for r in references.iter().filter(|r| r.record_id == expl.record_id) {
        found = true;
        if intervals_touch(seg.start_sec - tol, seg.end_sec + tol, r.start_sec, r.end_sec) {
            return Some(true);
        }
    }
    found.then_some(false)
}

/// Fraction of explanations whose top-1 segment, widened by `tolerance_sec`
/// on each side, intersects any reference interval for the record.
pub fn match_rate(
    explanations: &[Explanation],
    references: &[ReferenceAnnotation],
    tolerance_sec: f64,
) -> Result<MatchReport> {
    if !(tolerance_sec.is_finite() && tolerance_sec >= 0.0) {
        return Err(VarsError::Config(format!(
            "tolerance must be nonnegative, got {tolerance_sec}"
        )));
    }
    for r in references {
        r.validate()?;
    }
    let mut matched = 0usize;
    let mut total = 0usize;
    let mut missing = Vec::new();
    for expl in explanations {
        match top1_hits_any(expl, references, tolerance_sec) {
            None => missing.push(expl.record_id.clone()),
            Some(hit) => {
                total += 1;
                matched += hit as usize;
            }
        }
    }
    if total == 0 {
        return Err(VarsError::Contract(
            "no explanation has a matching reference annotation".into(),
        ));
    }
    Ok(MatchReport {
        rate: matched as f64 / total as f64,
        matched,
        total,
        missing_reference: missing,
    })
}

/// 0 s to 5 s in steps of 0.25 s.
pub fn default_tolerance_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.25).collect()
}

/// (tolerance, rate) per tolerance, in the given order.
pub fn match_rate_curve(
    explanations: &[Explanation],
    references: &[ReferenceAnnotation],
    tolerances: &[f64],
) -> Result<Vec<(f64, f64)>> {
    tolerances
        .iter()
        .map(|&tol| match_rate(explanations, references, tol).map(|r| (tol, r.rate)))
        .collect()
}

/// Record-level overlap counts at a tolerance: a record whose top-1 segment
/// misses its reference contributes to both "only" sides; a record without
/// a reference contributes to only_predicted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VennCounts {
    pub only_reference: usize,
    pub only_predicted: usize,
    pub both: usize,
}

pub fn venn_counts(
    explanations: &[Explanation],
    references: &[ReferenceAnnotation],
    tolerance_sec: f64,
) -> Result<VennCounts> {
    if !(tolerance_sec.is_finite() && tolerance_sec >= 0.0) {
        return Err(VarsError::Config(format!(
            "tolerance must be nonnegative, got {tolerance_sec}"
        )));
    }
    for r in references {
        r.validate()?;
    }
    let mut counts = VennCounts {
        only_reference: 0,
        only_predicted: 0,
        both: 0,
    };
    for expl in explanations {
        match top1_hits_any(expl, references, tolerance_sec) {
            None => counts.only_predicted += 1,
            Some(true) => counts.both += 1,
            Some(false) => {
                counts.only_reference += 1;
                counts.only_predicted += 1;
            }
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{fit_head, HeadConfig, HeadMode};
    use crate::numerics::DetRng;
    use crate::train::{pretrain, TrainConfig};

    // ── node importance ──

    #[test]
    fn rescale_spans_the_unit_interval_for_nonconstant_scores() {
        let edges = [(0, 1), (1, 2), (2, 3)];
        let scores = [0.2, 0.5, 0.9];
        let imp = node_importance(4, &edges, &scores);
        assert_eq!(imp.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(imp.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        // Node 2 touches 0.5 and 0.9, node 3 only 0.9: both take max 0.9.
        assert_eq!(imp[2], imp[3]);
        assert!(imp[0] < imp[1]);
    }

    #[test]
    fn constant_scores_make_every_node_fully_important() {
        let edges = [(0, 1), (1, 2)];
        let imp = node_importance(3, &edges, &[0.4, 0.4]);
        assert_eq!(imp, vec![1.0, 1.0, 1.0]);
        assert_eq!(node_importance(3, &[], &[]), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn isolated_node_sits_at_the_bottom_of_the_rescale() {
        let edges = [(0, 1)];
        let imp = node_importance(3, &edges, &[0.7]);
        assert_eq!(imp[2], 0.0);
        assert_eq!(imp[0], 1.0);
    }

    // ── salient segments ──

    fn toy_explanation(importances: &[f64]) -> Explanation {
        let segments: Vec<Segment> = importances
            .iter()
            .enumerate()
            .map(|(i, &imp)| Segment {
                lead: i / 4,
                start_sec: (i % 4) as f64,
                end_sec: (i % 4) as f64 + 1.0,
                importance: imp,
            })
            .collect();
        let mut sorted = segments.clone();
        sort_best_first(&mut sorted);
        Explanation {
            record_id: "toy".into(),
            prediction: vec![0.7, 0.3],
            node_importance: importances.to_vec(),
            edges: vec![],
            edge_scores: vec![],
            segments,
            salient_segments: sorted.clone(),
            top1_segment: sorted[0],
            tau_saliency: 0.0,
            top_k: None,
        }
    }

    #[test]
    fn zero_threshold_keeps_all_segments_sorted() {
        let expl = toy_explanation(&[0.1, 0.9, 0.5, 0.3]);
        let got = salient_segments(&expl, 0.0, None).unwrap();
        assert_eq!(got.len(), 4);
        let imps: Vec<f64> = got.iter().map(|s| s.importance).collect();
        assert_eq!(imps, vec![0.9, 0.5, 0.3, 0.1]);
    }

    #[test]
    fn default_threshold_filters_below_030() {
        let expl = toy_explanation(&[0.1, 0.9, 0.5, 0.29, 0.3]);
        let got = salient_segments(&expl, DEFAULT_TAU_SALIENCY, None).unwrap();
        assert_eq!(got.len(), 3);
        assert!(got.iter().all(|s| s.importance >= 0.3));
    }

    #[test]
    fn top_k_one_returns_exactly_the_top_segment() {
        let expl = toy_explanation(&[0.1, 0.9, 0.5]);
        let got = salient_segments(&expl, 0.0, Some(1)).unwrap();
        assert_eq!(got, vec![expl.top1_segment]);
    }

    #[test]
    fn higher_thresholds_select_subsets() {
        let expl = toy_explanation(&[0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95]);
        let mut prev = salient_segments(&expl, 0.0, None).unwrap();
        for step in 1..=10 {
            let tau = step as f64 / 10.0;
            let cur = salient_segments(&expl, tau, None).unwrap();
            for seg in &cur {
                assert!(prev.contains(seg), "tau {tau} added a segment");
            }
            prev = cur;
        }
    }

    #[test]
    fn out_of_range_threshold_is_rejected() {
        let expl = toy_explanation(&[0.5]);
        assert!(salient_segments(&expl, -0.1, None).is_err());
        assert!(salient_segments(&expl, 1.1, None).is_err());
    }

    // ── conditional assembly ──

    #[test]
    fn conditional_padding_and_truncation() {
        let p = assemble_conditional(&[0.2, 0.8], &[0.1, -0.3], 6);
        assert_eq!(p.data(), &[0.2, 0.8, 0.1, -0.3, 0.0, 0.0]);
        let q = assemble_conditional(&[0.2, 0.8], &[0.1, -0.3], 3);
        assert_eq!(q.data(), &[0.2, 0.8, 0.1]);
        let exact = assemble_conditional(&[0.2, 0.8], &[0.1, -0.3], 4);
        assert_eq!(exact.data(), &[0.2, 0.8, 0.1, -0.3]);
    }

    // ── match rate ──

    fn expl_with_top1(id: &str, start: f64, end: f64) -> Explanation {
        let seg = Segment {
            lead: 0,
            start_sec: start,
            end_sec: end,
            importance: 1.0,
        };
        Explanation {
            record_id: id.into(),
            prediction: vec![0.6, 0.4],
            node_importance: vec![1.0],
            edges: vec![],
            edge_scores: vec![],
            segments: vec![seg],
            salient_segments: vec![seg],
            top1_segment: seg,
            tau_saliency: 0.3,
            top_k: None,
        }
    }

    fn reference(id: &str, start: f64, end: f64) -> ReferenceAnnotation {
        ReferenceAnnotation {
            record_id: id.into(),
            start_sec: start,
            end_sec: end,
        }
    }

    #[test]
    fn exact_overlap_matches_at_zero_tolerance() {
        let expl = [expl_with_top1("a", 1.0, 2.0)];
        let refs = [reference("a", 1.5, 3.0)];
        let report = match_rate(&expl, &refs, 0.0).unwrap();
        assert_eq!(report.rate, 1.0);
        assert_eq!(report.matched, 1);
    }

    #[test]
    fn two_second_gap_needs_more_than_two_seconds_of_tolerance() {
        let expl = [expl_with_top1("a", 0.0, 1.0)];
        let refs = [reference("a", 3.0, 4.0)];
        assert_eq!(match_rate(&expl, &refs, 1.0).unwrap().rate, 0.0);
        assert_eq!(match_rate(&expl, &refs, 3.0).unwrap().rate, 1.0);
    }

    #[test]
    fn rate_is_monotone_over_the_default_grid() {
        let mut rng = DetRng::seed_from(13);
        let mut expls = Vec::new();
        let mut refs = Vec::new();
        for i in 0..30 {
            let id = format!("r{i}");
            let a = rng.uniform_in(0.0, 8.0);
            expls.push(expl_with_top1(&id, a, a + 0.5));
            let b = rng.uniform_in(0.0, 8.0);
            refs.push(reference(&id, b, b + 0.7));
        }
        let curve = match_rate_curve(&expls, &refs, &default_tolerance_grid()).unwrap();
        assert_eq!(curve.len(), 21);
        for pair in curve.windows(2) {
            assert!(pair[1].1 >= pair[0].1, "rate decreased at {:?}", pair[1].0);
        }
    }

    #[test]
    fn explanations_without_references_are_excluded_and_reported() {
        let expls = [
            expl_with_top1("a", 0.0, 1.0),
            expl_with_top1("orphan", 0.0, 1.0),
        ];
        let refs = [reference("a", 0.5, 2.0)];
        let report = match_rate(&expls, &refs, 0.0).unwrap();
        assert_eq!(report.total, 1);
        assert_eq!(report.missing_reference, vec!["orphan".to_string()]);
        assert_eq!(report.rate, 1.0);
    }

    #[test]
    fn no_usable_references_is_an_error() {
        let expls = [expl_with_top1("a", 0.0, 1.0)];
        assert!(match_rate(&expls, &[], 0.0).is_err());
    }

    #[test]
    fn negative_tolerance_is_rejected() {
        let expls = [expl_with_top1("a", 0.0, 1.0)];
        let refs = [reference("a", 0.5, 2.0)];
        assert!(match_rate(&expls, &refs, -0.5).is_err());
    }

    #[test]
    fn invalid_reference_interval_is_rejected() {
        let expls = [expl_with_top1("a", 0.0, 1.0)];
        let refs = [reference("a", 2.0, 1.0)];
        assert!(match_rate(&expls, &refs, 0.0).is_err());
    }

    #[test]
    fn any_of_several_references_per_record_is_enough() {
        let expls = [expl_with_top1("a", 4.0, 5.0)];
        let refs = [
            reference("a", 0.0, 1.0),
            reference("a", 4.5, 6.0),
            reference("a", 8.0, 9.0),
        ];
        let report = match_rate(&expls, &refs, 0.0).unwrap();
        assert_eq!(report.total, 1);
        assert_eq!(report.matched, 1);
        assert_eq!(venn_counts(&expls, &refs, 0.0).unwrap().both, 1);

        let far = [
            reference("a", 0.0, 1.0),
            reference("a", 8.0, 9.0),
        ];
        assert_eq!(match_rate(&expls, &far, 0.0).unwrap().matched, 0);
    }

    #[test]
    fn venn_counts_split_matches_and_misses() {
        let expls = [
            expl_with_top1("hit", 0.0, 1.0),
            expl_with_top1("miss", 0.0, 1.0),
            expl_with_top1("orphan", 0.0, 1.0),
        ];
        let refs = [reference("hit", 0.5, 2.0), reference("miss", 5.0, 6.0)];
        let venn = venn_counts(&expls, &refs, 0.0).unwrap();
        assert_eq!(venn.both, 1);
        assert_eq!(venn.only_reference, 1);
        assert_eq!(venn.only_predicted, 2);
    }

    // ── end to end ──

    pub(crate) fn tiny_fitted_checkpoint() -> (Checkpoint, Vec<EcgRecord>) {
        let records = crate::train::tests::toy_records(6, 120, 77);
        let cfg = TrainConfig {
            interval_len: 30,
            quantile: 0.6,
            num_heads: 2,
            hidden: 8,
            mask_rate: 0.4,
            cond_dim: 8,
            batch_size: 6,
            epochs: 1,
            seed: 3,
            ..TrainConfig::default()
        };
        let ckpt = pretrain(&records, &cfg).unwrap();
        let head_cfg = HeadConfig {
            classes: 2,
            mode: HeadMode::SingleLabel,
            steps: 10,
            ..HeadConfig::default()
        };
        let fitted = fit_head(&ckpt, &records, &head_cfg).unwrap();
        (fitted, records)
    }

    #[test]
    fn explain_is_deterministic_and_well_formed() {
        let (ckpt, records) = tiny_fitted_checkpoint();
        let record = &records[0];
        let a = explain(&ckpt, record).unwrap();
        let b = explain(&ckpt, record).unwrap();
        assert_eq!(a, b);

        let sum: f64 = a.prediction.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for &imp in &a.node_importance {
            assert!((0.0..=1.0).contains(&imp));
        }
        let duration = record.duration_sec();
        for seg in &a.segments {
            assert!(seg.start_sec >= 0.0 && seg.end_sec <= duration + 1e-9);
            assert!(seg.start_sec < seg.end_sec);
        }
        let best = a
            .segments
            .iter()
            .map(|s| s.importance)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.top1_segment.importance, best);
        assert_eq!(a.edges.len(), a.edge_scores.len());
    }

    #[test]
    fn explain_needs_a_head() {
        let records = crate::train::tests::toy_records(4, 120, 78);
        let cfg = TrainConfig {
            interval_len: 30,
            quantile: 0.6,
            num_heads: 2,
            hidden: 8,
            mask_rate: 0.4,
            cond_dim: 8,
            batch_size: 4,
            epochs: 1,
            seed: 3,
            ..TrainConfig::default()
        };
        let ckpt = pretrain(&records, &cfg).unwrap();
        let err = explain(&ckpt, &records[0]).unwrap_err().to_string();
        assert!(err.contains("head"), "{err}");
    }

    #[test]
    fn batch_explanation_matches_single_calls() {
        let (ckpt, records) = tiny_fitted_checkpoint();
        let batch = explain_batch(&ckpt, &records[..3]).unwrap();
        for (i, expl) in batch.iter().enumerate() {
            assert_eq!(*expl, explain(&ckpt, &records[i]).unwrap());
        }
    }
}
