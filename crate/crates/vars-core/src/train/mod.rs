//! Self-supervised pretraining loop.
//!
//! Each optimization step runs a mini-batch through graph construction,
//! masked reconstruction, and the two augmented views on one tape, combines
//! the three objectives by their configured weights, and applies Adam to
//! every parameter. The run is fully determined by (dataset, config):
//! shuffling, mask plans, and conditional vectors all come from one seeded
//! stream, and parallel feature extraction preserves record order.

pub mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

use crate::contrastive::{nt_xent_on_tape, total_loss_on_tape, LossWeights};
use crate::encoder::{plan_mask, MaskPlan};
use crate::error::{Result, VarsError};
use crate::graphcon::SparsifyRule;
use crate::model::{record_forward_on_tape, ForwardConfig, ModelState};
use crate::numerics::{AdamConfig, AdamState, DetRng, Tape, Tensor, Var};
use crate::par::par_map;
use crate::signal::{patch, EcgRecord, PatchConfig};
use crate::subgraph::{cond_gate_on_tape, jse_loss_on_tape, sample_cond, JseSign, SubgraphVars};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Samples per node interval.
    pub interval_len: usize,
    /// Edge retention quantile for graph construction.
    pub quantile: f64,
    /// When set, replaces the quantile rule: keep this many out-edges per
    /// node instead.
    #[serde(default)]
    pub top_k: Option<usize>,
    pub num_heads: usize,
    /// Embedding width of the encoder.
    pub hidden: usize,
    /// Fraction of nodes masked for reconstruction.
    pub mask_rate: f64,
    /// Exponent of the scaled cosine error.
    pub gamma: f64,
    /// Edge-score threshold for subgraph extraction.
    pub delta: f64,
    /// Contrastive temperature.
    pub tau: f64,
    pub weights: LossWeights,
    /// Dimension of the Laplace conditional vector.
    pub cond_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub jse_sign: JseSign,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            interval_len: 100,
            quantile: 0.75,
            top_k: None,
            num_heads: 4,
            hidden: 64,
            mask_rate: 0.3,
            gamma: 2.0,
            delta: 0.8,
            tau: 0.5,
            weights: LossWeights::default(),
            cond_dim: 64,
            batch_size: 32,
            epochs: 30,
            learning_rate: 1e-3,
            seed: 7,
            jse_sign: JseSign::Corrected,
        }
    }
}

impl TrainConfig {
    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.interval_len < 2 {
            problems.push(format!(
                "interval_len must be at least 2, got {}",
                self.interval_len
            ));
        }
        if self.num_heads == 0 {
            problems.push("num_heads must be at least 1".into());
        } else if self.interval_len % self.num_heads != 0 {
            problems.push(format!(
                "interval_len {} must be divisible by num_heads {}",
                self.interval_len, self.num_heads
            ));
        }
        if !(0.0..1.0).contains(&self.quantile) {
            problems.push(format!(
                "quantile must lie in [0, 1), got {}",
                self.quantile
            ));
        }
        if self.top_k == Some(0) {
            problems.push("top_k must be at least 1 when set".into());
        }
        if self.hidden == 0 {
            problems.push("hidden must be at least 1".into());
        }
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            problems.push(format!(
                "mask_rate must lie in (0, 1), got {}",
                self.mask_rate
            ));
        }
        if !(self.gamma.is_finite() && self.gamma >= 1.0) {
            problems.push(format!("gamma must be at least 1, got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            problems.push(format!("delta must lie in [0, 1], got {}", self.delta));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            problems.push(format!("tau must be positive, got {}", self.tau));
        }
        if let Err(VarsError::Config(msg)) = self.weights.validate() {
            problems.push(msg);
        }
        if self.cond_dim == 0 {
            problems.push("cond_dim must be at least 1".into());
        }
        if self.batch_size < 2 {
            problems.push(format!(
                "batch_size must be at least 2 for the subgraph estimator, got {}",
                self.batch_size
            ));
        }
        if self.epochs == 0 {
            problems.push("epochs must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            problems.push(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(VarsError::Config(problems.join("; ")))
        }
    }

    pub fn patch_config(&self) -> PatchConfig {
        PatchConfig::new(self.interval_len)
    }

    pub fn sparsify_rule(&self) -> SparsifyRule {
        match self.top_k {
            Some(k) => SparsifyRule::TopK(k),
            None => SparsifyRule::Quantile(self.quantile),
        }
    }

    fn forward_config(&self) -> ForwardConfig {
        ForwardConfig {
            rule: self.sparsify_rule(),
            gamma: self.gamma,
            delta: self.delta,
        }
    }
}

/// Mean component losses over one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub l_rec: f64,
    pub l_jse: f64,
    pub l_cl: f64,
    pub total: f64,
}

/// The JSE gate row: the conditional itself when its dimension matches the
/// embedding width, otherwise the first `hidden` entries of sigma(f_g(p)).
fn jse_gate(
    tape: &mut Tape,
    subgraph: &SubgraphVars,
    p: Var,
    cond_dim: usize,
    hidden: usize,
) -> Result<Var> {
    if cond_dim == hidden {
        return Ok(p);
    }
    let gate2h = cond_gate_on_tape(tape, subgraph, p)?;
    let col = tape.transpose(gate2h)?;
    let head: Vec<usize> = (0..hidden).collect();
    let sliced = tape.gather_rows(col, &head)?;
    tape.transpose(sliced)
}

struct StepLosses {
    l_rec: f64,
    l_jse: f64,
    l_cl: f64,
    total: f64,
}

fn batch_losses_on_tape(
    tape: &mut Tape,
    vars: &crate::model::ModelVars,
    xs: &[&Tensor],
    plans: &[MaskPlan],
    p: &Tensor,
    cfg: &TrainConfig,
) -> Result<(Var, Var, Var, Var)> {
    let pv = tape.leaf(p.clone());
    let fwd_cfg = cfg.forward_config();
    let mut l_recs = Vec::with_capacity(xs.len());
    let mut z_parents = Vec::with_capacity(xs.len());
    let mut z_recs = Vec::with_capacity(xs.len());
    let mut z_subs = Vec::with_capacity(xs.len());
    for (x, plan) in xs.iter().zip(plans) {
        let fwd = record_forward_on_tape(tape, vars, x, plan, pv, &fwd_cfg)?;
        l_recs.push(fwd.l_rec);
        z_parents.push(fwd.z_parent);
        z_recs.push(fwd.z_rec);
        z_subs.push(fwd.z_sub);
    }
    let rec_stack = tape.concat_rows(&l_recs)?;
    let l_rec = tape.mean_all(rec_stack)?;
    let zp = tape.concat_rows(&z_parents)?;
    let zr = tape.concat_rows(&z_recs)?;
    let zs = tape.concat_rows(&z_subs)?;
    let gate = jse_gate(tape, &vars.subgraph, pv, cfg.cond_dim, cfg.hidden)?;
    let l_jse = jse_loss_on_tape(tape, zp, zs, gate, cfg.jse_sign)?;
    let l_cl = nt_xent_on_tape(tape, zr, zs, cfg.tau)?;
    let total = total_loss_on_tape(tape, l_rec, l_jse, l_cl, &cfg.weights)?;
    Ok((l_rec, l_jse, l_cl, total))
}

fn train_step(
    model: &mut ModelState,
    adam: &mut AdamState,
    xs: &[&Tensor],
    plans: &[MaskPlan],
    p: &Tensor,
    cfg: &TrainConfig,
) -> Result<StepLosses> {
    let mut tape = Tape::new();
    let (vars, order) = model.on_tape(&mut tape);
    let (l_rec, l_jse, l_cl, total) = batch_losses_on_tape(&mut tape, &vars, xs, plans, p, cfg)?;
    let losses = StepLosses {
        l_rec: tape.value(l_rec).item(),
        l_jse: tape.value(l_jse).item(),
        l_cl: tape.value(l_cl).item(),
        total: tape.value(total).item(),
    };

    let grads = tape.backward(total)?;
    let grad_tensors: Vec<Tensor> = order
        .iter()
        .map(|&(_, v)| grads.get_or_zeros(v, tape.value(v).shape()))
        .collect();
    let mut params = Vec::with_capacity(order.len());
    model.visit_params(|_, t| params.push(t.clone()));
    adam.step(&mut params, &grad_tensors)?;
    let mut updated = params.into_iter();
    model.visit_params_mut(|_, t| *t = updated.next().expect("visit order fixed"));
    Ok(losses)
}

/// Squared-to-rooted gradient norms per parameter group after one batch
/// forward/backward pass, without updating the model.
pub fn gradient_norms_by_group(
    model: &ModelState,
    xs: &[&Tensor],
    plans: &[MaskPlan],
    p: &Tensor,
    cfg: &TrainConfig,
) -> Result<BTreeMap<String, f64>> {
    let mut tape = Tape::new();
    let (vars, order) = model.on_tape(&mut tape);
    let (_, _, _, total) = batch_losses_on_tape(&mut tape, &vars, xs, plans, p, cfg)?;
    let grads = tape.backward(total)?;
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for (name, v) in &order {
        let group = name.split('.').next().expect("nonempty name").to_string();
        let sq: f64 = grads
            .get_or_zeros(*v, tape.value(*v).shape())
            .data()
            .iter()
            .map(|g| g * g)
            .sum();
        *sums.entry(group).or_insert(0.0) += sq;
    }
    Ok(sums.into_iter().map(|(k, v)| (k, v.sqrt())).collect())
}

/// Per-record node features for the whole dataset, extracted in parallel
/// with record order preserved.
pub fn extract_features(records: &[EcgRecord], cfg: &TrainConfig) -> Result<Vec<Tensor>> {
    let patch_cfg = cfg.patch_config();
    par_map(records, |r| patch(r, &patch_cfg).map(|nf| nf.x))
        .into_iter()
        .collect()
}

pub fn pretrain(records: &[EcgRecord], cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    if records.len() < 2 {
        return Err(VarsError::Contract(format!(
            "pretraining needs at least 2 records, got {}",
            records.len()
        )));
    }
    let features = extract_features(records, cfg)?;

    let mut rng = DetRng::seed_from(cfg.seed);
    let mut model = ModelState::init(
        cfg.interval_len,
        cfg.hidden,
        cfg.num_heads,
        cfg.cond_dim,
        &mut rng,
    )?;
    let param_lens: Vec<usize> = {
        let mut lens = Vec::new();
        model.visit_params(|_, t| lens.push(t.len()));
        lens
    };
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &param_lens,
    );

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..records.len()).collect();
        rng.shuffle(&mut order);

        let mut sums = [0.0f64; 4];
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                log::warn!(
                    "skipping a batch of {} record(s): the subgraph estimator needs at least 2",
                    chunk.len()
                );
                continue;
            }
            let xs: Vec<&Tensor> = chunk.iter().map(|&i| &features[i]).collect();
            let plans: Vec<MaskPlan> = xs
                .iter()
                .map(|x| plan_mask(x.rows(), cfg.mask_rate, &mut rng))
                .collect::<Result<_>>()?;
            let p = sample_cond(&mut rng, cfg.cond_dim)?;
            let losses = train_step(&mut model, &mut adam, &xs, &plans, &p, cfg)?;
            let weight = chunk.len() as f64;
            sums[0] += losses.l_rec * weight;
            sums[1] += losses.l_jse * weight;
            sums[2] += losses.l_cl * weight;
            sums[3] += losses.total * weight;
            seen += chunk.len();
        }
        if seen == 0 {
            return Err(VarsError::Contract(
                "every batch was smaller than 2 records; nothing was trained".into(),
            ));
        }
        let denom = seen as f64;
        let epoch_loss = EpochLoss {
            epoch,
            l_rec: sums[0] / denom,
            l_jse: sums[1] / denom,
            l_cl: sums[2] / denom,
            total: sums[3] / denom,
        };
        log::info!(
            "epoch {}: rec {:.4} jse {:.4} cl {:.4} total {:.4}",
            epoch,
            epoch_loss.l_rec,
            epoch_loss.l_jse,
            epoch_loss.l_cl,
            epoch_loss.total
        );
        trace.push(epoch_loss);
    }

    Ok(Checkpoint {
        version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        tensors: model.named_params(),
        loss_trace: trace,
        head: None,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::signal::Label;

    pub(crate) fn toy_records(count: usize, samples: usize, seed: u64) -> Vec<EcgRecord> {
        (0..count)
            .map(|i| {
                let mut rng = DetRng::derive(seed, i as u64);
                let mut wave = |lead: usize| -> Vec<f64> {
                    (0..samples)
                        .map(|t| {
                            let phase = t as f64 / 17.0 + i as f64;
                            (phase.sin() * (1.0 + lead as f64 * 0.3)) + 0.1 * rng.normal()
                        })
                        .collect()
                };
                EcgRecord {
                    record_id: format!("toy_{i:04}"),
                    leads: vec![wave(0), wave(1)],
                    sampling_rate_hz: 120,
                    label: Some(Label::Single(i % 2)),
                    anomaly_intervals: Vec::new(),
                }
            })
            .collect()
    }

    pub(crate) fn toy_config() -> TrainConfig {
        TrainConfig {
            interval_len: 30,
            quantile: 0.6,
            num_heads: 2,
            hidden: 8,
            mask_rate: 0.4,
            cond_dim: 8,
            batch_size: 4,
            epochs: 2,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn default_config_validates() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn validation_reports_every_problem_at_once() {
        let bad = TrainConfig {
            interval_len: 1,
            quantile: 1.0,
            num_heads: 0,
            mask_rate: 0.0,
            tau: -1.0,
            batch_size: 1,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        for field in [
            "interval_len",
            "quantile",
            "num_heads",
            "mask_rate",
            "tau",
            "batch_size",
            "learning_rate",
        ] {
            assert!(msg.contains(field), "missing {field} in: {msg}");
        }
    }

    #[test]
    fn indivisible_heads_are_reported() {
        let bad = TrainConfig {
            interval_len: 30,
            num_heads: 7,
            ..TrainConfig::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("divisible"), "{msg}");
    }

    #[test]
    fn two_runs_produce_identical_traces() {
        let records = toy_records(6, 120, 40);
        let cfg = toy_config();
        let a = pretrain(&records, &cfg).unwrap();
        let b = pretrain(&records, &cfg).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.tensors, b.tensors);
    }

    #[test]
    fn every_parameter_group_receives_gradient() {
        let records = toy_records(4, 120, 41);
        let cfg = toy_config();
        let features = extract_features(&records, &cfg).unwrap();
        let mut rng = DetRng::seed_from(cfg.seed);
        let model = ModelState::init(
            cfg.interval_len,
            cfg.hidden,
            cfg.num_heads,
            cfg.cond_dim,
            &mut rng,
        )
        .unwrap();
        let xs: Vec<&Tensor> = features.iter().collect();
        let plans: Vec<MaskPlan> = xs
            .iter()
            .map(|x| plan_mask(x.rows(), cfg.mask_rate, &mut rng).unwrap())
            .collect();
        let p = sample_cond(&mut rng, cfg.cond_dim).unwrap();
        let norms = gradient_norms_by_group(&model, &xs, &plans, &p, &cfg).unwrap();
        for group in ["attention", "encoder", "decoder", "mask_token", "subgraph"] {
            let norm = norms.get(group).copied().unwrap_or(0.0);
            assert!(norm > 1e-12, "group {group} has zero gradient: {norms:?}");
        }
    }

    #[test]
    fn zero_weight_components_contribute_no_gradient() {
        let records = toy_records(4, 120, 42);
        let cfg = TrainConfig {
            weights: LossWeights {
                lambda_rec: 1.0,
                lambda_jse: 0.0,
                lambda_cl: 0.0,
            },
            ..toy_config()
        };
        let features = extract_features(&records, &cfg).unwrap();
        let mut rng = DetRng::seed_from(cfg.seed);
        let model = ModelState::init(
            cfg.interval_len,
            cfg.hidden,
            cfg.num_heads,
            cfg.cond_dim,
            &mut rng,
        )
        .unwrap();
        let xs: Vec<&Tensor> = features.iter().collect();
        let plans: Vec<MaskPlan> = xs
            .iter()
            .map(|x| plan_mask(x.rows(), cfg.mask_rate, &mut rng).unwrap())
            .collect();
        let p = sample_cond(&mut rng, cfg.cond_dim).unwrap();
        let norms = gradient_norms_by_group(&model, &xs, &plans, &p, &cfg).unwrap();
        // The scorer only feeds the two zero-weighted objectives.
        assert!(norms["subgraph"] < 1e-15, "{norms:?}");
        assert!(norms["attention"] > 1e-12, "{norms:?}");

        // The components themselves are still evaluated and reported.
        let ckpt = pretrain(&records, &cfg).unwrap();
        assert!(ckpt.loss_trace[0].l_jse != 0.0);
        assert!(ckpt.loss_trace[0].l_cl != 0.0);
    }

    #[test]
    fn undersized_trailing_batch_is_skipped() {
        let records = toy_records(5, 120, 43);
        let cfg = TrainConfig {
            batch_size: 2,
            epochs: 1,
            ..toy_config()
        };
        let ckpt = pretrain(&records, &cfg).unwrap();
        assert_eq!(ckpt.loss_trace.len(), 1);
        assert!(ckpt.loss_trace[0].total.is_finite());
    }

    #[test]
    fn single_record_dataset_is_rejected() {
        let records = toy_records(1, 120, 44);
        assert!(pretrain(&records, &toy_config()).is_err());
    }
}
