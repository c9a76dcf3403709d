//! Conditional feature-subgraph extraction and the JSE objective.
//!
//! A conditional vector p (Laplace(0, 1) during pretraining, a task vector
//! at interpretation time) gates an edge scorer: each directed parent edge
//! (i, j) is scored sigmoid(MLP([h_i; h_j] * sigma(f_g(p)))), and edges with
//! score >= delta form the subgraph view. The view keeps every node and the
//! parent's edge weights on retained edges.
//!
//! Training treats the hard keep/drop decision as identity in the scores
//! (straight-through), so the scorer and gate receive gradients even though
//! the forward pass is an exact 0/1 selection.
//!
//! The JSE loss ties graph embeddings H to their subgraph embeddings H_sub:
//! with s_ij = (p * H_i) . (p * H_sub_j), the bracketed estimator
//! (1/L) sum_i log sigma(s_ii) + (1/(L^2-L)) sum_{i != j} log(1 - sigma(s_ij))
//! is nonpositive; by default the loss is its negation so that minimizing
//! aligns positive pairs. The printed-form sign is available behind
//! [`JseSign::Paper`].

use crate::error::{Result, VarsError};
use crate::graphcon::EcgGraph;
use crate::numerics::{DetRng, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JseSign {
    /// Bracketed estimator as printed (nonpositive; minimizing it pushes
    /// positive pairs apart).
    Paper,
    /// Negated estimator (nonnegative; minimizing aligns positive pairs).
    Corrected,
}

#[derive(Clone, Debug)]
pub struct SubgraphParams {
    /// Scorer first affine [2h x h].
    pub w1: Tensor,
    pub b1: Tensor,
    /// Scorer second affine [h x 1].
    pub w2: Tensor,
    pub b2: Tensor,
    /// Conditional projection [cond_dim x 2h].
    pub fg_w: Tensor,
    pub fg_b: Tensor,
}

impl SubgraphParams {
    pub fn init(hidden: usize, cond_dim: usize, rng: &mut DetRng) -> Self {
        let affine = |rows: usize, cols: usize, rng: &mut DetRng| {
            let sd = 1.0 / (rows as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols).map(|_| sd * rng.normal()).collect();
            Tensor::new(vec![rows, cols], data).expect("affine shape")
        };
        SubgraphParams {
            w1: affine(2 * hidden, hidden, rng),
            b1: Tensor::zeros(vec![1, hidden]),
            w2: affine(hidden, 1, rng),
            b2: Tensor::zeros(vec![1, 1]),
            fg_w: affine(cond_dim, 2 * hidden, rng),
            fg_b: Tensor::zeros(vec![1, 2 * hidden]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn cond_dim(&self) -> usize {
        self.fg_w.rows()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SubgraphVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub fg_w: Var,
    pub fg_b: Var,
}

impl SubgraphParams {
    pub fn on_tape(&self, tape: &mut Tape) -> SubgraphVars {
        SubgraphVars {
            w1: tape.leaf(self.w1.clone()),
            b1: tape.leaf(self.b1.clone()),
            w2: tape.leaf(self.w2.clone()),
            b2: tape.leaf(self.b2.clone()),
            fg_w: tape.leaf(self.fg_w.clone()),
            fg_b: tape.leaf(self.fg_b.clone()),
        }
    }
}

/// i.i.d. Laplace(0, 1) conditional vector as a [1 x cond_dim] row.
pub fn sample_cond(rng: &mut DetRng, cond_dim: usize) -> Result<Tensor> {
    if cond_dim == 0 {
        return Err(VarsError::Config("cond_dim must be at least 1".into()));
    }
    let data: Vec<f64> = (0..cond_dim).map(|_| rng.laplace()).collect();
    Tensor::new(vec![1, cond_dim], data)
}

/// sigma(f_g(p)) on the tape: [1 x cond_dim] -> [1 x 2h].
pub fn cond_gate_on_tape(
    tape: &mut Tape,
    params: &SubgraphVars,
    p: Var,
) -> Result<Var> {
    let proj = tape.matmul(p, params.fg_w)?;
    let biased = tape.add_row_broadcast(proj, params.fg_b)?;
    tape.sigmoid(biased)
}

/// Per-edge scores on the tape. `h` is [N x hidden]; output is
/// [len(edges) x 1] with entries in (0, 1).
pub fn edge_scores_on_tape(
    tape: &mut Tape,
    params: &SubgraphVars,
    h: Var,
    edges: &[(usize, usize)],
    p: Var,
) -> Result<Var> {
    if edges.is_empty() {
        return Err(VarsError::Contract("edge_scores over an empty edge list".into()));
    }
    let srcs: Vec<usize> = edges.iter().map(|&(i, _)| i).collect();
    let dsts: Vec<usize> = edges.iter().map(|&(_, j)| j).collect();
    let hs = tape.gather_rows(h, &srcs)?;
    let hd = tape.gather_rows(h, &dsts)?;
    let feats = tape.concat_cols(hs, hd)?;
    let gate = cond_gate_on_tape(tape, params, p)?;
    let gated = tape.mul_row_broadcast(feats, gate)?;
    let z1 = tape.matmul(gated, params.w1)?;
    let z1b = tape.add_row_broadcast(z1, params.b1)?;
    let hid = tape.relu(z1b)?;
    let z2 = tape.matmul(hid, params.w2)?;
    let z2b = tape.add_row_broadcast(z2, params.b2)?;
    tape.sigmoid(z2b)
}

/// Value-level edge scores. Edges are scored in fixed-size chunks so huge
/// graphs never materialize the full per-edge feature matrix at once; every
/// row is computed independently, so the output matches the single-pass
/// result exactly.
pub fn edge_scores(
    params: &SubgraphParams,
    h: &Tensor,
    edges: &[(usize, usize)],
    p: &Tensor,
) -> Result<Vec<f64>> {
    if edges.is_empty() {
        return Err(VarsError::Contract("edge_scores over an empty edge list".into()));
    }
    const EDGE_CHUNK: usize = 32_768;
    let mut out = Vec::with_capacity(edges.len());
    for chunk in edges.chunks(EDGE_CHUNK) {
        let mut tape = Tape::new();
        let vars = params.on_tape(&mut tape);
        let hv = tape.leaf(h.clone());
        let pv = tape.leaf(p.clone());
        let w = edge_scores_on_tape(&mut tape, &vars, hv, chunk, pv)?;
        out.extend_from_slice(tape.value(w).data());
    }
    Ok(out)
}

/// The subgraph selected from one parent graph at threshold `delta`.
#[derive(Clone, Debug)]
pub struct SubgraphView {
    /// The parent's directed edges, in the parent's edge order.
    pub edges: Vec<(usize, usize)>,
    /// Score per parent edge, aligned with `edges`.
    pub scores: Vec<f64>,
    /// keep[e] == (scores[e] >= delta_used).
    pub keep: Vec<bool>,
    pub delta_used: f64,
}

impl SubgraphView {
    pub fn retained(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .zip(&self.keep)
            .filter(|(_, &k)| k)
            .map(|(&e, _)| e)
            .collect()
    }

    pub fn retained_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Dense adjacency of the view: parent weights on retained edges.
    pub fn adjacency(&self, parent_a: &Tensor) -> Tensor {
        let n = parent_a.rows();
        let mut out = Tensor::zeros(vec![n, n]);
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            if self.keep[e] {
                out.set(i, j, parent_a.at(i, j));
            }
        }
        out
    }
}

/// Hard-threshold extraction over precomputed scores.
pub fn extract_subgraph(graph: &EcgGraph, scores: &[f64], delta: f64) -> Result<SubgraphView> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(VarsError::Config(format!(
            "edge retention threshold must lie in [0, 1], got {delta}"
        )));
    }
    let edges = graph.edges();
    if edges.len() != scores.len() {
        return Err(VarsError::Contract(format!(
            "{} scores for {} parent edges",
            scores.len(),
            edges.len()
        )));
    }
    let keep: Vec<bool> = scores.iter().map(|&w| w >= delta).collect();
    Ok(SubgraphView {
        edges,
        scores: scores.to_vec(),
        keep,
        delta_used: delta,
    })
}

/// JSE loss over a batch of graph embeddings `h` [L x dim] and subgraph
/// embeddings `h_sub` [L x dim], conditioned by `gate` [1 x dim].
pub fn jse_loss_on_tape(
    tape: &mut Tape,
    h: Var,
    h_sub: Var,
    gate: Var,
    sign: JseSign,
) -> Result<Var> {
    let l = tape.value(h).rows();
    if l < 2 {
        return Err(VarsError::Contract(format!(
            "jse needs at least 2 graphs per batch, got {l}"
        )));
    }
    if tape.value(h).shape() != tape.value(h_sub).shape() {
        return Err(VarsError::ShapeMismatch {
            op: "jse_loss".into(),
            detail: format!(
                "{:?} vs {:?}",
                tape.value(h).shape(),
                tape.value(h_sub).shape()
            ),
        });
    }

    let gh = tape.mul_row_broadcast(h, gate)?;
    let gs = tape.mul_row_broadcast(h_sub, gate)?;
    let gst = tape.transpose(gs)?;
    let s = tape.matmul(gh, gst)?;
    let sig = tape.sigmoid(s)?;
    let sig = tape.clamp(sig, 1e-7, 1.0 - 1e-7)?;

    let mut diag = Tensor::zeros(vec![l, l]);
    let mut off = Tensor::full(vec![l, l], 1.0);
    for i in 0..l {
        diag.set(i, i, 1.0);
        off.set(i, i, 0.0);
    }

    let log_pos = tape.ln(sig)?;
    let pos_masked = tape.mul_const_mask(log_pos, &diag)?;
    let pos_sum = tape.sum_all(pos_masked)?;
    let pos_term = tape.mul_scalar(pos_sum, 1.0 / l as f64)?;

    let neg_sig = tape.mul_scalar(sig, -1.0)?;
    let one_minus = tape.add_scalar(neg_sig, 1.0)?;
    let log_neg = tape.ln(one_minus)?;
    let neg_masked = tape.mul_const_mask(log_neg, &off)?;
    let neg_sum = tape.sum_all(neg_masked)?;
    let neg_term = tape.mul_scalar(neg_sum, 1.0 / ((l * l - l) as f64))?;

    let bracket = tape.add(pos_term, neg_term)?;
    match sign {
        JseSign::Paper => Ok(bracket),
        JseSign::Corrected => tape.mul_scalar(bracket, -1.0),
    }
}

/// Value-level JSE loss with an explicit gate row.
pub fn jse_loss(h: &Tensor, h_sub: &Tensor, gate: &Tensor, sign: JseSign) -> Result<f64> {
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let sv = tape.leaf(h_sub.clone());
    let gv = tape.leaf(gate.clone());
    let loss = jse_loss_on_tape(&mut tape, hv, sv, gv, sign)?;
    Ok(tape.value(loss).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_check;
    use crate::signal::NodeMeta;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    // ── conditional vector ──

    #[test]
    fn cond_vector_moments_match_laplace() {
        let mut rng = DetRng::seed_from(61);
        let dim = 10;
        let draws = 10_000;
        let mut all = Vec::with_capacity(dim * draws);
        for _ in 0..draws {
            all.extend(sample_cond(&mut rng, dim).unwrap().data().to_vec());
        }
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 2.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn cond_vector_deterministic_per_seed() {
        let a = sample_cond(&mut DetRng::seed_from(3), 8).unwrap();
        let b = sample_cond(&mut DetRng::seed_from(3), 8).unwrap();
        assert_eq!(a, b);
    }

    // ── edge scoring ──

    fn fixture(hidden: usize, cond: usize, seed: u64) -> SubgraphParams {
        SubgraphParams::init(hidden, cond, &mut DetRng::seed_from(seed))
    }

    #[test]
    fn scores_lie_in_open_unit_interval() {
        let params = fixture(4, 4, 10);
        let mut rng = DetRng::seed_from(11);
        let h = Tensor::new(vec![5, 4], (0..20).map(|_| rng.normal()).collect()).unwrap();
        let p = sample_cond(&mut rng, 4).unwrap();
        let edges = [(0, 1), (1, 2), (3, 4), (4, 0)];
        let w = edge_scores(&params, &h, &edges, &p).unwrap();
        assert_eq!(w.len(), 4);
        for v in w {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn chunked_scoring_matches_a_single_pass() {
        let params = fixture(3, 3, 14);
        let mut rng = DetRng::seed_from(15);
        let n = 200;
        let h = Tensor::new(vec![n, 3], (0..n * 3).map(|_| rng.normal()).collect()).unwrap();
        let p = sample_cond(&mut rng, 3).unwrap();
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        assert!(edges.len() > 32_768, "edge list must span several chunks");

        let chunked = edge_scores(&params, &h, &edges, &p).unwrap();
        let mut tape = Tape::new();
        let vars = params.on_tape(&mut tape);
        let hv = tape.leaf(h.clone());
        let pv = tape.leaf(p.clone());
        let w = edge_scores_on_tape(&mut tape, &vars, hv, &edges, pv).unwrap();
        assert_eq!(chunked, tape.value(w).data());
    }

    #[test]
    fn zero_cond_with_zero_bias_gives_half_gate() {
        let params = fixture(3, 5, 12);
        let mut rng = DetRng::seed_from(13);
        let h = Tensor::new(vec![4, 3], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let p = Tensor::zeros(vec![1, 5]);
        let edges = [(0, 1), (2, 3)];
        let w = edge_scores(&params, &h, &edges, &p).unwrap();

        // Oracle: gate 0.5 means the scorer sees features halved.
        let mut tape = Tape::new();
        let vars = params.on_tape(&mut tape);
        let hv = tape.leaf(h.clone());
        let hs = tape.gather_rows(hv, &[0, 2]).unwrap();
        let hd = tape.gather_rows(hv, &[1, 3]).unwrap();
        let feats = tape.concat_cols(hs, hd).unwrap();
        let halved = tape.mul_scalar(feats, 0.5).unwrap();
        let z1 = tape.matmul(halved, vars.w1).unwrap();
        let z1b = tape.add_row_broadcast(z1, vars.b1).unwrap();
        let hid = tape.relu(z1b).unwrap();
        let z2 = tape.matmul(hid, vars.w2).unwrap();
        let z2b = tape.add_row_broadcast(z2, vars.b2).unwrap();
        let expect = tape.sigmoid(z2b).unwrap();
        for (a, b) in w.iter().zip(tape.value(expect).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scoring_is_directed() {
        let params = fixture(4, 4, 14);
        let mut rng = DetRng::seed_from(15);
        let h = Tensor::new(vec![3, 4], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let p = sample_cond(&mut rng, 4).unwrap();
        let w = edge_scores(&params, &h, &[(0, 1), (1, 0)], &p).unwrap();
        assert!((w[0] - w[1]).abs() > 1e-9, "directed scores coincided: {w:?}");
    }

    #[test]
    fn scores_independent_of_edge_order() {
        let params = fixture(3, 3, 16);
        let mut rng = DetRng::seed_from(17);
        let h = Tensor::new(vec![4, 3], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let p = sample_cond(&mut rng, 3).unwrap();
        let fwd = [(0, 1), (1, 2), (2, 3)];
        let rev = [(2, 3), (1, 2), (0, 1)];
        let wf = edge_scores(&params, &h, &fwd, &p).unwrap();
        let wr = edge_scores(&params, &h, &rev, &p).unwrap();
        assert_eq!(wf[0], wr[2]);
        assert_eq!(wf[1], wr[1]);
        assert_eq!(wf[2], wr[0]);
    }

    // ── extraction ──

    fn toy_graph(n: usize, weights: &[(usize, usize, f64)]) -> EcgGraph {
        let mut a = Tensor::zeros(vec![n, n]);
        for &(i, j, w) in weights {
            a.set(i, j, w);
        }
        let meta = (0..n)
            .map(|i| NodeMeta {
                lead: 0,
                start_sample: i * 10,
                end_sample: (i + 1) * 10,
                start_sec: i as f64,
                end_sec: (i + 1) as f64,
            })
            .collect();
        EcgGraph {
            meta,
            x: Tensor::zeros(vec![n, 4]),
            a,
            theta_used: Some(0.1),
        }
    }

    #[test]
    fn delta_zero_keeps_all_edges() {
        let g = toy_graph(3, &[(0, 1, 0.5), (1, 2, 0.7), (2, 0, 0.9)]);
        let view = extract_subgraph(&g, &[0.2, 0.4, 0.6], 0.0).unwrap();
        assert_eq!(view.retained_count(), 3);
    }

    #[test]
    fn delta_one_with_strict_sigmoid_scores_keeps_none() {
        let g = toy_graph(3, &[(0, 1, 0.5), (1, 2, 0.7)]);
        let view = extract_subgraph(&g, &[0.93, 0.999], 1.0).unwrap();
        assert_eq!(view.retained_count(), 0);
    }

    #[test]
    fn extraction_matches_brute_force_filter_at_080() {
        let g = toy_graph(
            4,
            &[(0, 1, 0.3), (0, 2, 0.4), (1, 3, 0.5), (2, 3, 0.6), (3, 0, 0.7)],
        );
        let mut rng = DetRng::seed_from(55);
        let scores: Vec<f64> = (0..5).map(|_| rng.uniform()).collect();
        let view = extract_subgraph(&g, &scores, 0.80).unwrap();
        let edges = g.edges();
        let brute: Vec<(usize, usize)> = edges
            .iter()
            .zip(&scores)
            .filter(|(_, &w)| w >= 0.80)
            .map(|(&e, _)| e)
            .collect();
        assert_eq!(view.retained(), brute);
    }

    #[test]
    fn retained_set_is_antitone_in_delta() {
        let g = toy_graph(4, &[(0, 1, 0.3), (1, 2, 0.4), (2, 3, 0.5), (3, 0, 0.6)]);
        let scores = [0.15, 0.45, 0.75, 0.95];
        let mut prev = usize::MAX;
        for step in 0..=10 {
            let delta = step as f64 / 10.0;
            let view = extract_subgraph(&g, &scores, delta).unwrap();
            let kept = view.retained_count();
            assert!(kept <= prev, "delta {delta} grew the retained set");
            for (e, &(i, j)) in view.edges.iter().enumerate() {
                if view.keep[e] {
                    assert!(g.a.at(i, j) != 0.0);
                    assert!(view.scores[e] >= delta);
                }
            }
            prev = kept;
        }
    }

    #[test]
    fn view_adjacency_carries_parent_weights() {
        let g = toy_graph(3, &[(0, 1, 0.55), (1, 2, 0.65)]);
        let view = extract_subgraph(&g, &[0.9, 0.1], 0.5).unwrap();
        let a_sub = view.adjacency(&g.a);
        assert_eq!(a_sub.at(0, 1), 0.55);
        assert_eq!(a_sub.at(1, 2), 0.0);
    }

    // ── JSE ──

    #[test]
    fn all_zero_embeddings_give_two_log_two() {
        let h = Tensor::zeros(vec![2, 4]);
        let gate = Tensor::full(vec![1, 4], 1.0);
        let loss = jse_loss(&h, &h, &gate, JseSign::Corrected).unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12, "loss {loss}");
        let paper = jse_loss(&h, &h, &gate, JseSign::Paper).unwrap();
        assert!((paper + 2.0 * 2f64.ln()).abs() < 1e-12, "paper-sign loss {paper}");
    }

    #[test]
    fn aligned_positives_and_antialigned_negatives_approach_zero() {
        let big = 50.0;
        let h = t(&[&[big, 0.0], &[-big, 0.0]]);
        let loss = jse_loss(&h, &h, &Tensor::full(vec![1, 2], 1.0), JseSign::Corrected).unwrap();
        assert!(loss > 0.0 && loss < 1e-5, "loss {loss}");
    }

    #[test]
    fn single_graph_batch_is_rejected() {
        let h = Tensor::zeros(vec![1, 4]);
        let gate = Tensor::full(vec![1, 4], 1.0);
        assert!(jse_loss(&h, &h, &gate, JseSign::Corrected).is_err());
    }

    #[test]
    fn jse_gradient_matches_finite_differences() {
        let mut rng = DetRng::seed_from(19);
        let h = Tensor::new(vec![3, 4], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let hs = Tensor::new(vec![3, 4], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let gate = sample_cond(&mut rng, 4).unwrap();
        let err = finite_difference_check(&[h, hs, gate], 1e-5, |tape, vars| {
            jse_loss_on_tape(tape, vars[0], vars[1], vars[2], JseSign::Corrected)
        })
        .unwrap();
        assert!(err < 1e-4, "fd error {err}");
    }

    #[test]
    fn increasing_a_positive_pair_dot_lowers_the_loss() {
        // Embedding layout chosen so s_11 = h[0][0] and nothing else moves.
        let h_sub = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let gate = Tensor::full(vec![1, 2], 1.0);
        let at = |a: f64| {
            let h = t(&[&[a, 0.3], &[0.2, -0.4]]);
            jse_loss(&h, &h_sub, &gate, JseSign::Corrected).unwrap()
        };
        assert!(at(0.6) < at(0.5));
        assert!(at(0.5) < at(0.4));
    }

    #[test]
    fn straight_through_selection_trains_the_scorer() {
        let params = fixture(3, 3, 90);
        let mut rng = DetRng::seed_from(91);
        let h = Tensor::new(vec![4, 3], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let g = toy_graph(4, &[(0, 1, 0.5), (1, 2, 0.6), (2, 3, 0.7)]);
        let p = sample_cond(&mut rng, 3).unwrap();

        let mut tape = Tape::new();
        let vars = params.on_tape(&mut tape);
        let hv = tape.leaf(h);
        let pv = tape.leaf(p);
        let av = tape.leaf(g.a.clone());
        let edges = g.edges();
        let w = edge_scores_on_tape(&mut tape, &vars, hv, &edges, pv).unwrap();
        let keep: Vec<bool> = tape.value(w).data().iter().map(|&v| v >= 0.4).collect();
        let a_sub = tape.st_select(av, w, &edges, &keep).unwrap();
        let loss = tape.sum_all(a_sub).unwrap();
        let grads = tape.backward(loss).unwrap();

        for (name, var) in [
            ("w1", vars.w1),
            ("w2", vars.w2),
            ("fg_w", vars.fg_w),
            ("fg_b", vars.fg_b),
        ] {
            let g = grads.get(var).unwrap_or_else(|| panic!("{name} unreached"));
            let norm: f64 = g.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm > 1e-12, "{name} gradient vanished");
        }
    }
}
