//! Graph construction from node features.
//!
//! Edges come from multi-head self-attention over the node feature matrix:
//! per head, scores are sigmoid(X Qw (X Kw)^T / sqrt(d_k)); heads are
//! averaged into a dense score matrix, and a per-graph quantile threshold
//! keeps only the strongest connections. The diagonal is always zero; the
//! GIN update's (1 + eps) self term carries self-information instead.
//!
//! During training the threshold acts as a constant 0/1 mask over the live
//! score matrix: which edges survive is decided from the current values and
//! is itself non-differentiable, but the retained entries keep their
//! gradient path into the attention projections.

use crate::error::{Result, VarsError};
use crate::numerics::{DetRng, Tape, Tensor, Var};
use crate::signal::{patch, EcgRecord, NodeMeta, PatchConfig};

#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub num_heads: usize,
    pub d_k: usize,
    /// Per-head query projections, each [d x d_k].
    pub q_weights: Vec<Tensor>,
    /// Per-head key projections, each [d x d_k].
    pub k_weights: Vec<Tensor>,
}

impl AttentionParams {
    /// Random init with sd 1/sqrt(d) entries. Errors unless num_heads
    /// divides d exactly.
    pub fn init(d: usize, num_heads: usize, rng: &mut DetRng) -> Result<Self> {
        if num_heads == 0 || d % num_heads != 0 {
            return Err(VarsError::Config(format!(
                "feature dim {d} is not divisible by num_heads {num_heads}"
            )));
        }
        let d_k = d / num_heads;
        let sd = 1.0 / (d as f64).sqrt();
        let mut make = || -> Tensor {
            let data: Vec<f64> = (0..d * d_k).map(|_| sd * rng.normal()).collect();
            Tensor::new(vec![d, d_k], data).expect("projection shape")
        };
        let q_weights: Vec<Tensor> = (0..num_heads).map(|_| make()).collect();
        let k_weights: Vec<Tensor> = (0..num_heads).map(|_| make()).collect();
        Ok(AttentionParams {
            num_heads,
            d_k,
            q_weights,
            k_weights,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.q_weights[0].rows()
    }
}

/// Edge-sparsification rule applied to the dense attention scores.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum SparsifyRule {
    /// Keep off-diagonal entries at or above the per-graph score quantile.
    Quantile(f64),
    /// Keep each node's k highest-scoring out-edges, ties broken toward
    /// the lower column index.
    TopK(usize),
}

/// A record's graph: node features, weighted adjacency, and provenance.
#[derive(Clone, Debug)]
pub struct EcgGraph {
    pub meta: Vec<NodeMeta>,
    /// [N x d] node features.
    pub x: Tensor,
    /// [N x N] adjacency; zero diagonal; nonzero entries are head-averaged
    /// attention scores that survived sparsification.
    pub a: Tensor,
    /// Realized quantile threshold; None under the top-k rule.
    pub theta_used: Option<f64>,
}

impl EcgGraph {
    pub fn num_nodes(&self) -> usize {
        self.x.rows()
    }

    /// Directed edges (i, j) with nonzero weight, row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.a.at(i, j) != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Debug/export dump: node provenance, dense adjacency, threshold.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "num_nodes": self.num_nodes(),
            "node_meta": self.meta,
            "adjacency": self.a.data(),
            "theta_used": self.theta_used,
        })
    }
}

/// Head-averaged attention scores on the tape. `x` is [N x d]; each weight
/// pair is [d x d_k]. Output is [N x N] with entries in (0, 1).
pub fn attention_scores_on_tape(
    tape: &mut Tape,
    x: Var,
    q_weights: &[Var],
    k_weights: &[Var],
    d_k: usize,
) -> Result<Var> {
    if q_weights.is_empty() || q_weights.len() != k_weights.len() {
        return Err(VarsError::Contract(format!(
            "attention needs matched head weights, got {} query and {} key",
            q_weights.len(),
            k_weights.len()
        )));
    }
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut acc: Option<Var> = None;
    for (&qw, &kw) in q_weights.iter().zip(k_weights) {
        let q = tape.matmul(x, qw)?;
        let k = tape.matmul(x, kw)?;
        let kt = tape.transpose(k)?;
        let logits = tape.matmul(q, kt)?;
        let scaled = tape.mul_scalar(logits, scale)?;
        let scores = tape.sigmoid(scaled)?;
        acc = Some(match acc {
            None => scores,
            Some(sum) => tape.add(sum, scores)?,
        });
    }
    tape.mul_scalar(acc.expect("at least one head"), 1.0 / q_weights.len() as f64)
}

/// Value-level attention scores.
pub fn attention_scores(x: &Tensor, params: &AttentionParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let qs: Vec<Var> = params.q_weights.iter().map(|w| tape.leaf(w.clone())).collect();
    let ks: Vec<Var> = params.k_weights.iter().map(|w| tape.leaf(w.clone())).collect();
    let out = attention_scores_on_tape(&mut tape, xv, &qs, &ks, params.d_k)?;
    Ok(tape.value(out).clone())
}

/// The 0/1 keep mask and realized threshold for score matrix `w` at filter
/// quantile `q`. The threshold is the empirical q-quantile of off-diagonal
/// entries (ascending sort, index floor(q * count)); entries >= theta are
/// kept, so ties at the threshold survive. The diagonal is never kept.
pub fn threshold_mask(w: &Tensor, q: f64) -> Result<(Tensor, f64)> {
    let n = w.rows();
    if w.cols() != n {
        return Err(VarsError::ShapeMismatch {
            op: "threshold_mask".into(),
            detail: format!("score matrix must be square, got {:?}", w.shape()),
        });
    }
    if !(0.0..1.0).contains(&q) {
        return Err(VarsError::Config(format!(
            "filter quantile must lie in [0, 1), got {q}"
        )));
    }
    let mut off_diag: Vec<f64> = Vec::with_capacity(n * n - n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off_diag.push(w.at(i, j));
            }
        }
    }
    let theta = if off_diag.is_empty() {
        0.0
    } else {
        off_diag.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        off_diag[((off_diag.len() as f64) * q).floor() as usize]
    };

    let mut mask = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..n {
            if i != j && w.at(i, j) >= theta {
                mask.set(i, j, 1.0);
            }
        }
    }
    Ok((mask, theta))
}

/// The 0/1 keep mask retaining each row's k highest off-diagonal scores
/// (fewer when the row has fewer). Ties keep the lower column index. The
/// diagonal is never kept.
pub fn topk_mask(w: &Tensor, k: usize) -> Result<Tensor> {
    let n = w.rows();
    if w.cols() != n {
        return Err(VarsError::ShapeMismatch {
            op: "topk_mask".into(),
            detail: format!("score matrix must be square, got {:?}", w.shape()),
        });
    }
    if k == 0 {
        return Err(VarsError::Config("top-k keep count must be positive".into()));
    }
    let mut mask = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        let mut cols: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        cols.sort_by(|&a, &b| {
            w.at(i, b)
                .partial_cmp(&w.at(i, a))
                .expect("finite scores")
                .then(a.cmp(&b))
        });
        for &j in cols.iter().take(k) {
            mask.set(i, j, 1.0);
        }
    }
    Ok(mask)
}

/// Keep mask for either rule, plus the realized quantile threshold when
/// one exists.
pub fn sparsify_mask(w: &Tensor, rule: &SparsifyRule) -> Result<(Tensor, Option<f64>)> {
    match rule {
        SparsifyRule::Quantile(q) => threshold_mask(w, *q).map(|(m, th)| (m, Some(th))),
        SparsifyRule::TopK(k) => topk_mask(w, *k).map(|m| (m, None)),
    }
}

/// Value-level thresholding: adjacency plus realized theta.
pub fn threshold_adjacency(w: &Tensor, q: f64) -> Result<(Tensor, f64)> {
    let (a, theta) = sparsify_adjacency(w, &SparsifyRule::Quantile(q))?;
    Ok((a, theta.expect("quantile rule has a threshold")))
}

/// Value-level sparsification: surviving entries keep their score.
pub fn sparsify_adjacency(w: &Tensor, rule: &SparsifyRule) -> Result<(Tensor, Option<f64>)> {
    let (mask, theta) = sparsify_mask(w, rule)?;
    let data: Vec<f64> = w
        .data()
        .iter()
        .zip(mask.data())
        .map(|(v, m)| v * m)
        .collect();
    Ok((Tensor::new(w.shape().to_vec(), data)?, theta))
}

/// Full value-level pipeline: normalize, patch, score, threshold.
pub fn build_graph(
    record: &EcgRecord,
    patch_cfg: &PatchConfig,
    params: &AttentionParams,
    q: f64,
) -> Result<EcgGraph> {
    build_graph_with(record, patch_cfg, params, &SparsifyRule::Quantile(q))
}

/// As `build_graph`, under either sparsification rule.
pub fn build_graph_with(
    record: &EcgRecord,
    patch_cfg: &PatchConfig,
    params: &AttentionParams,
    rule: &SparsifyRule,
) -> Result<EcgGraph> {
    let nf = patch(record, patch_cfg)?;
    if nf.feature_dim() != params.feature_dim() {
        return Err(VarsError::Config(format!(
            "record {}: node feature dim {} does not match attention dim {}",
            record.record_id,
            nf.feature_dim(),
            params.feature_dim()
        )));
    }
    let w = attention_scores(&nf.x, params)?;
    let (a, theta_used) = sparsify_adjacency(&w, rule)?;
    Ok(EcgGraph {
        meta: nf.meta,
        x: nf.x,
        a,
        theta_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Label;

    fn record(leads: Vec<Vec<f64>>, rate: u32) -> EcgRecord {
        EcgRecord {
            record_id: "g".into(),
            leads,
            sampling_rate_hz: rate,
            label: Some(Label::Single(0)),
            anomaly_intervals: vec![],
        }
    }

    #[test]
    fn zero_weights_give_uniform_half_scores() {
        let params = AttentionParams {
            num_heads: 2,
            d_k: 2,
            q_weights: vec![Tensor::zeros(vec![4, 2]); 2],
            k_weights: vec![Tensor::zeros(vec![4, 2]); 2],
        };
        let x = Tensor::full(vec![3, 4], 0.7);
        let w = attention_scores(&x, &params).unwrap();
        for &v in w.data() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn single_node_scores_in_open_interval() {
        let mut rng = DetRng::seed_from(4);
        let params = AttentionParams::init(6, 3, &mut rng).unwrap();
        let x = Tensor::full(vec![1, 6], 0.3);
        let w = attention_scores(&x, &params).unwrap();
        assert_eq!(w.shape(), &[1, 1]);
        assert!(w.item() > 0.0 && w.item() < 1.0);
    }

    #[test]
    fn hand_set_single_head_matches_sigmoid_values() {
        // X = I so the projected queries/keys are the weights themselves.
        // Qw chosen so Q K^T = [[0, sqrt(d_k)], [-sqrt(d_k), 0]].
        let d_k: f64 = 2.0;
        let s = d_k.sqrt();
        let params = AttentionParams {
            num_heads: 1,
            d_k: 2,
            q_weights: vec![Tensor::from_rows(&[vec![0.0, s], vec![-s, 0.0]]).unwrap()],
            k_weights: vec![Tensor::eye(2)],
        };
        let w = attention_scores(&Tensor::eye(2), &params).unwrap();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        assert!((w.at(0, 0) - 0.5).abs() < 1e-12);
        assert!((w.at(0, 1) - sig(1.0)).abs() < 1e-12);
        assert!((w.at(1, 0) - sig(-1.0)).abs() < 1e-12);
        assert!((w.at(1, 1) - 0.5).abs() < 1e-12);
        assert!((w.at(0, 1) - 0.7311).abs() < 1e-4);
        assert!((w.at(1, 0) - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn init_rejects_indivisible_heads() {
        let mut rng = DetRng::seed_from(0);
        assert!(AttentionParams::init(10, 4, &mut rng).is_err());
        assert!(AttentionParams::init(10, 0, &mut rng).is_err());
    }

    fn distinct_scores(n: usize) -> Tensor {
        // Pseudorandom but distinct off-diagonal values in (0, 1).
        let mut rng = DetRng::seed_from(77);
        let mut w = Tensor::zeros(vec![n, n]);
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                loop {
                    let v = rng.uniform();
                    let key = v.to_bits();
                    if v > 0.0 && seen.insert(key) {
                        w.set(i, j, v);
                        break;
                    }
                }
            }
        }
        w
    }

    #[test]
    fn quantile_75_on_distinct_40_node_scores_keeps_exactly_390() {
        let n = 40;
        let w = distinct_scores(n);
        let (a, theta) = threshold_adjacency(&w, 0.75).unwrap();

        // Sort-based oracle: independently count entries at/above the
        // empirical quantile.
        let mut sorted: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w.at(i, j))
            .collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle_theta = sorted[(sorted.len() as f64 * 0.75).floor() as usize];
        let oracle_count = sorted.iter().filter(|&&v| v >= oracle_theta).count();
        assert_eq!(oracle_count, 390);

        assert_eq!(theta, oracle_theta);
        let nonzeros = a.data().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzeros, 390);
    }

    #[test]
    fn quantile_zero_keeps_every_off_diagonal_entry() {
        let w = distinct_scores(6);
        let (a, _) = threshold_adjacency(&w, 0.0).unwrap();
        let nonzeros = a.data().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzeros, 30);
    }

    #[test]
    fn constant_scores_keep_everything_via_tie_rule() {
        let w = Tensor::full(vec![5, 5], 0.42);
        let (a, theta) = threshold_adjacency(&w, 0.75).unwrap();
        assert_eq!(theta, 0.42);
        let nonzeros = a.data().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzeros, 20);
    }

    #[test]
    fn diagonal_is_always_zero_and_weights_at_least_theta() {
        let w = distinct_scores(12);
        let (a, theta) = threshold_adjacency(&w, 0.6).unwrap();
        for i in 0..12 {
            assert_eq!(a.at(i, i), 0.0);
            for j in 0..12 {
                let v = a.at(i, j);
                assert!(v == 0.0 || (v >= theta && v < 1.0));
            }
        }
    }

    #[test]
    fn edge_set_is_antitone_in_quantile() {
        let w = distinct_scores(10);
        let mut prev: Option<std::collections::BTreeSet<(usize, usize)>> = None;
        for step in 0..10 {
            let q = step as f64 / 10.0;
            let (a, _) = threshold_adjacency(&w, q).unwrap();
            let edges: std::collections::BTreeSet<(usize, usize)> = (0..10)
                .flat_map(|i| (0..10).map(move |j| (i, j)))
                .filter(|&(i, j)| a.at(i, j) != 0.0)
                .collect();
            if let Some(p) = &prev {
                assert!(edges.is_subset(p), "q={q} grew the edge set");
            }
            prev = Some(edges);
        }
    }

    #[test]
    fn topk_keeps_each_rows_highest_scores() {
        let w = distinct_scores(9);
        let mask = topk_mask(&w, 3).unwrap();
        for i in 0..9 {
            assert_eq!(mask.at(i, i), 0.0);
            let kept: Vec<usize> = (0..9).filter(|&j| mask.at(i, j) == 1.0).collect();
            assert_eq!(kept.len(), 3);
            let floor = kept
                .iter()
                .map(|&j| w.at(i, j))
                .fold(f64::INFINITY, f64::min);
            for j in (0..9).filter(|&j| j != i && !kept.contains(&j)) {
                assert!(w.at(i, j) < floor);
            }
        }
    }

    #[test]
    fn topk_ties_prefer_the_lower_column() {
        let mut w = Tensor::zeros(vec![3, 3]);
        for j in [0, 1, 2] {
            w.set(1, j, 0.5);
        }
        let mask = topk_mask(&w, 1).unwrap();
        assert_eq!(mask.at(1, 0), 1.0);
        assert_eq!(mask.at(1, 2), 0.0);
    }

    #[test]
    fn topk_saturates_at_the_row_size_and_rejects_zero() {
        let w = distinct_scores(4);
        let mask = topk_mask(&w, 10).unwrap();
        let kept = mask.data().iter().filter(|&&v| v == 1.0).count();
        assert_eq!(kept, 12);
        assert!(topk_mask(&w, 0).is_err());
    }

    #[test]
    fn topk_edge_sets_grow_with_k() {
        let w = distinct_scores(8);
        let mut prev = std::collections::BTreeSet::new();
        for k in 1..=7 {
            let mask = topk_mask(&w, k).unwrap();
            let edges: std::collections::BTreeSet<(usize, usize)> = (0..8)
                .flat_map(|i| (0..8).map(move |j| (i, j)))
                .filter(|&(i, j)| mask.at(i, j) == 1.0)
                .collect();
            assert!(prev.is_subset(&edges), "k={k} dropped an edge");
            assert_eq!(edges.len(), 8 * k);
            prev = edges;
        }
    }

    #[test]
    fn topk_graphs_have_no_threshold() {
        let mut rng = DetRng::seed_from(5);
        let params = AttentionParams::init(20, 2, &mut rng).unwrap();
        let rec = record(vec![vec![0.3; 100], vec![0.9; 100]], 100);
        let g = build_graph_with(&rec, &PatchConfig::new(20), &params, &SparsifyRule::TopK(2))
            .unwrap();
        assert_eq!(g.theta_used, None);
        for i in 0..g.num_nodes() {
            let out_degree = (0..g.num_nodes())
                .filter(|&j| g.a.at(i, j) != 0.0)
                .count();
            assert_eq!(out_degree, 2);
        }
    }

    #[test]
    fn doubling_dk_with_zero_weights_leaves_scores_unchanged() {
        // Regression fixture for the sqrt(d_k) divisor: with zero weights the
        // logits are zero regardless of d_k, so scores stay 0.5.
        for (d, heads) in [(4usize, 2usize), (8, 2)] {
            let params = AttentionParams {
                num_heads: heads,
                d_k: d / heads,
                q_weights: vec![Tensor::zeros(vec![d, d / heads]); heads],
                k_weights: vec![Tensor::zeros(vec![d, d / heads]); heads],
            };
            let w = attention_scores(&Tensor::full(vec![3, d], 1.0), &params).unwrap();
            for &v in w.data() {
                assert_eq!(v, 0.5);
            }
        }
    }

    #[test]
    fn heterogeneous_records_share_one_parameter_set() {
        let mut rng = DetRng::seed_from(9);
        let m = 60;
        let params = AttentionParams::init(m, 4, &mut rng).unwrap();
        let cfg = PatchConfig::new(m);

        let two_lead = record(
            vec![
                (0..360 * 2).map(|i| (i as f64 * 0.01).sin()).collect(),
                (0..360 * 2).map(|i| (i as f64 * 0.02).cos()).collect(),
            ],
            360,
        );
        let twelve_lead = record(
            (0..12)
                .map(|l| (0..500).map(|i| ((i + l * 7) as f64 * 0.015).sin()).collect())
                .collect(),
            500,
        );

        let g1 = build_graph(&two_lead, &cfg, &params, 0.75).unwrap();
        let g2 = build_graph(&twelve_lead, &cfg, &params, 0.75).unwrap();
        assert_eq!(g1.num_nodes(), 2 * (720 / m));
        assert_eq!(g2.num_nodes(), 12 * (500 / m));
        for g in [&g1, &g2] {
            for i in 0..g.num_nodes() {
                assert_eq!(g.a.at(i, i), 0.0);
            }
        }
    }

    #[test]
    fn build_graph_is_deterministic() {
        let mut rng = DetRng::seed_from(21);
        let params = AttentionParams::init(50, 2, &mut rng).unwrap();
        let rec = record(
            vec![(0..500).map(|i| (i as f64 * 0.03).sin()).collect()],
            250,
        );
        let cfg = PatchConfig::new(50);
        let g1 = build_graph(&rec, &cfg, &params, 0.75).unwrap();
        let g2 = build_graph(&rec, &cfg, &params, 0.75).unwrap();
        assert_eq!(g1.a, g2.a);
        assert_eq!(g1.theta_used, g2.theta_used);
    }

    #[test]
    fn mismatched_feature_dim_is_a_config_error() {
        let mut rng = DetRng::seed_from(2);
        let params = AttentionParams::init(40, 2, &mut rng).unwrap();
        let rec = record(vec![vec![0.1; 300]], 100);
        let err = build_graph(&rec, &PatchConfig::new(60), &params, 0.5).unwrap_err();
        assert!(matches!(err, VarsError::Config(_)), "{err}");
    }

    #[test]
    fn graph_json_dump_has_expected_fields() {
        let mut rng = DetRng::seed_from(3);
        let params = AttentionParams::init(20, 2, &mut rng).unwrap();
        let rec = record(vec![vec![0.5; 100], vec![-0.25; 100]], 100);
        let g = build_graph(&rec, &PatchConfig::new(20), &params, 0.5).unwrap();
        let json = g.to_json();
        assert_eq!(json["num_nodes"], 10);
        assert_eq!(json["adjacency"].as_array().unwrap().len(), 100);
        assert!(json["theta_used"].is_number());
        assert_eq!(json["node_meta"].as_array().unwrap().len(), 10);
    }
}
