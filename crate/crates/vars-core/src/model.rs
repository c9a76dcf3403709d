//! The full parameter set and the per-record forward pass.
//!
//! Parameters are owned by typed sub-structures (attention, encoder and
//! decoder stacks, mask token, subgraph scorer) and exposed through a
//! deterministic named ordering so the optimizer, checkpoints, and
//! gradient reports all agree on layout. Names are dotted paths whose
//! first segment is the parameter group: `attention.q.0`, `encoder.1.w2`,
//! `mask_token`, `subgraph.fg_w`.

use crate::encoder::{EncoderState, GinLayerVars, MaskPlan};
use crate::encoder::{encode_on_tape, reconstruct_on_tape, scaled_cosine_error_on_tape};
use crate::error::{Result, VarsError};
use crate::graphcon::{attention_scores_on_tape, sparsify_mask, AttentionParams, SparsifyRule};
use crate::numerics::{DetRng, Tape, Tensor, Var};
use crate::subgraph::{edge_scores_on_tape, SubgraphParams, SubgraphVars};

#[derive(Clone, Debug)]
pub struct ModelState {
    pub attention: AttentionParams,
    pub autoenc: EncoderState,
    pub subgraph: SubgraphParams,
}

#[derive(Clone, Debug)]
pub struct ModelVars {
    pub q_weights: Vec<Var>,
    pub k_weights: Vec<Var>,
    pub encoder: Vec<GinLayerVars>,
    pub decoder: Vec<GinLayerVars>,
    pub mask_token: Var,
    pub subgraph: SubgraphVars,
}

impl ModelState {
    pub fn init(
        interval_len: usize,
        hidden: usize,
        num_heads: usize,
        cond_dim: usize,
        rng: &mut DetRng,
    ) -> Result<Self> {
        Ok(ModelState {
            attention: AttentionParams::init(interval_len, num_heads, rng)?,
            autoenc: EncoderState::init(interval_len, hidden, rng),
            subgraph: SubgraphParams::init(hidden, cond_dim, rng),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.attention.feature_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.autoenc.hidden_dim()
    }

    pub fn cond_dim(&self) -> usize {
        self.subgraph.cond_dim()
    }

    /// Visits every parameter in the canonical order.
    pub fn visit_params(&self, mut f: impl FnMut(String, &Tensor)) {
        for (i, t) in self.attention.q_weights.iter().enumerate() {
            f(format!("attention.q.{i}"), t);
        }
        for (i, t) in self.attention.k_weights.iter().enumerate() {
            f(format!("attention.k.{i}"), t);
        }
        for (prefix, stack) in [("encoder", &self.autoenc.encoder), ("decoder", &self.autoenc.decoder)]
        {
            for (i, layer) in stack.iter().enumerate() {
                f(format!("{prefix}.{i}.epsilon"), &layer.epsilon);
                f(format!("{prefix}.{i}.w1"), &layer.w1);
                f(format!("{prefix}.{i}.b1"), &layer.b1);
                f(format!("{prefix}.{i}.w2"), &layer.w2);
                f(format!("{prefix}.{i}.b2"), &layer.b2);
            }
        }
        f("mask_token".into(), &self.autoenc.mask_token);
        f("subgraph.w1".into(), &self.subgraph.w1);
        f("subgraph.b1".into(), &self.subgraph.b1);
        f("subgraph.w2".into(), &self.subgraph.w2);
        f("subgraph.b2".into(), &self.subgraph.b2);
        f("subgraph.fg_w".into(), &self.subgraph.fg_w);
        f("subgraph.fg_b".into(), &self.subgraph.fg_b);
    }

    /// Mutable visit in the same canonical order as [`visit_params`].
    pub fn visit_params_mut(&mut self, mut f: impl FnMut(String, &mut Tensor)) {
        for (i, t) in self.attention.q_weights.iter_mut().enumerate() {
            f(format!("attention.q.{i}"), t);
        }
        for (i, t) in self.attention.k_weights.iter_mut().enumerate() {
            f(format!("attention.k.{i}"), t);
        }
        for (prefix, stack) in [
            ("encoder", &mut self.autoenc.encoder),
            ("decoder", &mut self.autoenc.decoder),
        ] {
            for (i, layer) in stack.iter_mut().enumerate() {
                f(format!("{prefix}.{i}.epsilon"), &mut layer.epsilon);
                f(format!("{prefix}.{i}.w1"), &mut layer.w1);
                f(format!("{prefix}.{i}.b1"), &mut layer.b1);
                f(format!("{prefix}.{i}.w2"), &mut layer.w2);
                f(format!("{prefix}.{i}.b2"), &mut layer.b2);
            }
        }
        f("mask_token".into(), &mut self.autoenc.mask_token);
        f("subgraph.w1".into(), &mut self.subgraph.w1);
        f("subgraph.b1".into(), &mut self.subgraph.b1);
        f("subgraph.w2".into(), &mut self.subgraph.w2);
        f("subgraph.b2".into(), &mut self.subgraph.b2);
        f("subgraph.fg_w".into(), &mut self.subgraph.fg_w);
        f("subgraph.fg_b".into(), &mut self.subgraph.fg_b);
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit_params(|name, t| out.push((name, t.clone())));
        out
    }

    /// Rebuilds a model from named tensors, validating that every expected
    /// parameter is present with its stored shape.
    pub fn from_named(
        interval_len: usize,
        hidden: usize,
        num_heads: usize,
        cond_dim: usize,
        tensors: &[(String, Tensor)],
    ) -> Result<Self> {
        let mut rng = DetRng::seed_from(0);
        let mut model = ModelState::init(interval_len, hidden, num_heads, cond_dim, &mut rng)?;
        let mut missing = Vec::new();
        model.visit_params_mut(|name, t| {
            match tensors.iter().find(|(n, _)| *n == name) {
                Some((_, stored)) if stored.shape() == t.shape() => *t = stored.clone(),
                Some((_, stored)) => missing.push(format!(
                    "{name}: stored shape {:?}, expected {:?}",
                    stored.shape(),
                    t.shape()
                )),
                None => missing.push(format!("{name}: absent")),
            }
        });
        if missing.is_empty() {
            Ok(model)
        } else {
            Err(VarsError::Format {
                source_name: "checkpoint tensors".into(),
                detail: missing.join("; "),
            })
        }
    }

    /// Registers every parameter as a tape leaf. The returned list pairs
    /// each canonical name with its Var, in visit order.
    pub fn on_tape(&self, tape: &mut Tape) -> (ModelVars, Vec<(String, Var)>) {
        let mut order = Vec::new();
        let q_weights: Vec<Var> = self
            .attention
            .q_weights
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let v = tape.leaf(t.clone());
                order.push((format!("attention.q.{i}"), v));
                v
            })
            .collect();
        let k_weights: Vec<Var> = self
            .attention
            .k_weights
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let v = tape.leaf(t.clone());
                order.push((format!("attention.k.{i}"), v));
                v
            })
            .collect();
        let stack_vars = |prefix: &str,
                              stack: &[crate::encoder::GinLayerParams],
                              tape: &mut Tape,
                              order: &mut Vec<(String, Var)>| {
            stack
                .iter()
                .enumerate()
                .map(|(i, layer)| {
                    let vars = layer.on_tape(tape);
                    order.push((format!("{prefix}.{i}.epsilon"), vars.epsilon));
                    order.push((format!("{prefix}.{i}.w1"), vars.w1));
                    order.push((format!("{prefix}.{i}.b1"), vars.b1));
                    order.push((format!("{prefix}.{i}.w2"), vars.w2));
                    order.push((format!("{prefix}.{i}.b2"), vars.b2));
                    vars
                })
                .collect::<Vec<_>>()
        };
        let encoder = stack_vars("encoder", &self.autoenc.encoder, tape, &mut order);
        let decoder = stack_vars("decoder", &self.autoenc.decoder, tape, &mut order);
        let mask_token = tape.leaf(self.autoenc.mask_token.clone());
        order.push(("mask_token".into(), mask_token));
        let subgraph = self.subgraph.on_tape(tape);
        order.push(("subgraph.w1".into(), subgraph.w1));
        order.push(("subgraph.b1".into(), subgraph.b1));
        order.push(("subgraph.w2".into(), subgraph.w2));
        order.push(("subgraph.b2".into(), subgraph.b2));
        order.push(("subgraph.fg_w".into(), subgraph.fg_w));
        order.push(("subgraph.fg_b".into(), subgraph.fg_b));
        (
            ModelVars {
                q_weights,
                k_weights,
                encoder,
                decoder,
                mask_token,
                subgraph,
            },
            order,
        )
    }
}

/// Hyperparameters the forward pass needs beyond the parameters themselves.
#[derive(Clone, Copy, Debug)]
pub struct ForwardConfig {
    pub rule: SparsifyRule,
    pub gamma: f64,
    pub delta: f64,
}

/// Everything one record contributes to the pretraining objective.
#[derive(Clone, Debug)]
pub struct RecordForward {
    /// Thresholded adjacency with gradients flowing to the attention weights.
    pub a: Var,
    pub theta: Option<f64>,
    pub edges: Vec<(usize, usize)>,
    pub keep: Vec<bool>,
    /// Scalar masked-reconstruction error.
    pub l_rec: Var,
    /// Graph embedding of the parent graph, [1 x h].
    pub z_parent: Var,
    /// Graph embedding of the reconstruction view, [1 x h].
    pub z_rec: Var,
    /// Graph embedding of the subgraph view, [1 x h].
    pub z_sub: Var,
}

/// Runs one record through graph construction, masked reconstruction, and
/// both augmented views on a shared tape. `x` is the [N x d] node-feature
/// matrix and `p` the conditional row already on the tape.
pub fn record_forward_on_tape(
    tape: &mut Tape,
    vars: &ModelVars,
    x: &Tensor,
    plan: &MaskPlan,
    p: Var,
    cfg: &ForwardConfig,
) -> Result<RecordForward> {
    let d_k = tape.value(vars.q_weights[0]).cols();
    let xv = tape.leaf(x.clone());
    let w = attention_scores_on_tape(tape, xv, &vars.q_weights, &vars.k_weights, d_k)?;
    let (mask, theta) = sparsify_mask(tape.value(w), &cfg.rule)?;
    let a = tape.mul_const_mask(w, &mask)?;

    let edges: Vec<(usize, usize)> = {
        let n = mask.rows();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if mask.at(i, j) != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    };
    if edges.is_empty() {
        return Err(VarsError::Contract(
            "thresholded graph has no edges; records must yield at least 2 nodes".into(),
        ));
    }

    let (x_rec, _) = reconstruct_on_tape(
        tape,
        &vars.encoder,
        &vars.decoder,
        vars.mask_token,
        a,
        xv,
        plan,
    )?;
    let l_rec = scaled_cosine_error_on_tape(tape, xv, x_rec, plan, cfg.gamma)?;

    let (h_parent, z_parent) = encode_on_tape(tape, &vars.encoder, a, xv)?;
    let (_, z_rec) = encode_on_tape(tape, &vars.encoder, a, x_rec)?;

    let scores = edge_scores_on_tape(tape, &vars.subgraph, h_parent, &edges, p)?;
    let keep: Vec<bool> = tape
        .value(scores)
        .data()
        .iter()
        .map(|&v| v >= cfg.delta)
        .collect();
    let a_sub = tape.st_select(a, scores, &edges, &keep)?;
    let (_, z_sub) = encode_on_tape(tape, &vars.encoder, a_sub, xv)?;

    Ok(RecordForward {
        a,
        theta,
        edges,
        keep,
        l_rec,
        z_parent,
        z_rec,
        z_sub,
    })
}

/// Value-level embedding of one record's node features: builds the graph,
/// encodes it, and returns (node embeddings [N x h], graph embedding [1 x h]).
pub fn encode_features(
    model: &ModelState,
    x: &Tensor,
    rule: &SparsifyRule,
) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let (vars, _) = model.on_tape(&mut tape);
    let d_k = model.attention.q_weights[0].cols();
    let xv = tape.leaf(x.clone());
    let w = attention_scores_on_tape(&mut tape, xv, &vars.q_weights, &vars.k_weights, d_k)?;
    let (mask, _) = sparsify_mask(tape.value(w), rule)?;
    let a = tape.mul_const_mask(w, &mask)?;
    let (h, z) = encode_on_tape(&mut tape, &vars.encoder, a, xv)?;
    Ok((tape.value(h).clone(), tape.value(z).clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::plan_mask;
    use crate::subgraph::sample_cond;

    fn small_model(seed: u64) -> ModelState {
        ModelState::init(6, 5, 2, 5, &mut DetRng::seed_from(seed)).unwrap()
    }

    #[test]
    fn visit_orders_agree_and_cover_all_groups() {
        let model = small_model(1);
        let mut names = Vec::new();
        model.visit_params(|n, _| names.push(n));
        let mut names_mut = Vec::new();
        let mut m2 = model.clone();
        m2.visit_params_mut(|n, _| names_mut.push(n));
        assert_eq!(names, names_mut);

        let mut tape = Tape::new();
        let (_, order) = model.on_tape(&mut tape);
        let tape_names: Vec<String> = order.into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, tape_names);

        for group in ["attention", "encoder", "decoder", "mask_token", "subgraph"] {
            assert!(
                names.iter().any(|n| n.split('.').next() == Some(group)),
                "missing group {group}"
            );
        }
        let unique: std::collections::BTreeSet<&String> = names.iter().collect();
        assert_eq!(unique.len(), names.len(), "duplicate parameter names");
    }

    #[test]
    fn named_roundtrip_restores_every_parameter() {
        let model = small_model(2);
        let named = model.named_params();
        let restored = ModelState::from_named(6, 5, 2, 5, &named).unwrap();
        for ((na, a), (nb, b)) in named.iter().zip(restored.named_params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(a, b, "{na} changed across roundtrip");
        }
    }

    #[test]
    fn from_named_reports_missing_and_misshapen_tensors() {
        let model = small_model(3);
        let mut named = model.named_params();
        named.retain(|(n, _)| n != "mask_token");
        let idx = named.iter().position(|(n, _)| n == "subgraph.w2").unwrap();
        named[idx].1 = Tensor::zeros(vec![2, 2]);
        let err = ModelState::from_named(6, 5, 2, 5, &named)
            .unwrap_err()
            .to_string();
        assert!(err.contains("mask_token"), "{err}");
        assert!(err.contains("subgraph.w2"), "{err}");
    }

    #[test]
    fn record_forward_produces_consistent_shapes() {
        let model = small_model(4);
        let mut rng = DetRng::seed_from(5);
        let x = Tensor::new(vec![4, 6], (0..24).map(|_| rng.normal()).collect()).unwrap();
        let plan = plan_mask(4, 0.5, &mut rng).unwrap();
        let p = sample_cond(&mut rng, 5).unwrap();

        let mut tape = Tape::new();
        let (vars, _) = model.on_tape(&mut tape);
        let pv = tape.leaf(p);
        let cfg = ForwardConfig {
            rule: SparsifyRule::Quantile(0.5),
            gamma: 2.0,
            delta: 0.5,
        };
        let fwd = record_forward_on_tape(&mut tape, &vars, &x, &plan, pv, &cfg).unwrap();
        assert_eq!(tape.value(fwd.a).shape(), &[4, 4]);
        assert_eq!(tape.value(fwd.l_rec).len(), 1);
        for z in [fwd.z_parent, fwd.z_rec, fwd.z_sub] {
            assert_eq!(tape.value(z).shape(), &[1, 5]);
        }
        assert_eq!(fwd.edges.len(), fwd.keep.len());
        assert!(!fwd.edges.is_empty());
        for &(i, j) in &fwd.edges {
            assert_ne!(i, j);
            assert!(tape.value(fwd.a).at(i, j) > 0.0);
        }
    }

    #[test]
    fn encode_features_matches_tape_path() {
        let model = small_model(6);
        let mut rng = DetRng::seed_from(7);
        let x = Tensor::new(vec![3, 6], (0..18).map(|_| rng.normal()).collect()).unwrap();
        let (h, z) = encode_features(&model, &x, &SparsifyRule::Quantile(0.5)).unwrap();
        assert_eq!(h.shape(), &[3, 5]);
        assert_eq!(z.shape(), &[1, 5]);
        let mean0: f64 = (0..3).map(|i| h.at(i, 0)).sum::<f64>() / 3.0;
        assert!((z.at(0, 0) - mean0).abs() < 1e-12);
    }
}
