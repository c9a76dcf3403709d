//! Graph-level contrastive alignment between the two pretraining views.
//!
//! Each record yields a reconstruction-view embedding Z_r[i] and a
//! subgraph-view embedding Z_s[i]. NT-Xent treats (Z_r[i], Z_s[i]) as the
//! positive pair and every other pooled row as a negative: with the pool
//! P = [Z_r; Z_s] (2L rows),
//!
//!   loss = -(1/L) sum_i log( exp(cos(Z_r[i], Z_s[i]) / tau)
//!                          / sum_{k != i} exp(cos(Z_r[i], P[k]) / tau) )
//!
//! where the denominator runs over all 2L pool rows except the anchor
//! itself. Anchors are the L reconstruction rows only. A zero-norm
//! embedding row is rejected because its cosine is undefined.
//!
//! The combined pretraining objective is the plain weighted sum
//! lambda_rec * l_rec + lambda_jse * l_jse + lambda_cl * l_cl.

use crate::error::{Result, VarsError};
use crate::numerics::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

/// Paired view embeddings for one batch, both [L x dim].
#[derive(Clone, Debug)]
pub struct ViewBatch {
    pub z_r: Tensor,
    pub z_s: Tensor,
}

impl ViewBatch {
    pub fn new(z_r: Tensor, z_s: Tensor) -> Result<Self> {
        if z_r.shape() != z_s.shape() {
            return Err(VarsError::ShapeMismatch {
                op: "view_batch".into(),
                detail: format!("{:?} vs {:?}", z_r.shape(), z_s.shape()),
            });
        }
        Ok(ViewBatch { z_r, z_s })
    }

    pub fn len(&self) -> usize {
        self.z_r.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn reject_zero_rows(t: &Tensor, view: &str) -> Result<()> {
    for i in 0..t.rows() {
        let norm_sq: f64 = t.row(i).iter().map(|v| v * v).sum();
        if norm_sq == 0.0 {
            return Err(VarsError::Contract(format!(
                "{view} embedding row {i} has zero norm, cosine undefined"
            )));
        }
    }
    Ok(())
}

/// NT-Xent on the tape. `z_r` and `z_s` are [L x dim] Vars; returns [1 x 1].
pub fn nt_xent_on_tape(tape: &mut Tape, z_r: Var, z_s: Var, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(VarsError::Config(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let shape_r = tape.value(z_r).shape().to_vec();
    if shape_r != tape.value(z_s).shape() {
        return Err(VarsError::ShapeMismatch {
            op: "nt_xent".into(),
            detail: format!("{:?} vs {:?}", shape_r, tape.value(z_s).shape()),
        });
    }
    reject_zero_rows(tape.value(z_r), "reconstruction-view")?;
    reject_zero_rows(tape.value(z_s), "subgraph-view")?;
    let l = shape_r[0];
    if l == 1 {
        // The only pool row besides the anchor is its own positive, so the
        // ratio is identically 1 and the loss vanishes for all inputs.
        return Ok(tape.leaf(Tensor::zeros(vec![1, 1])));
    }

    let nr = tape.row_l2_normalize(z_r)?;
    let pool = tape.concat_rows(&[z_r, z_s])?;
    let np = tape.row_l2_normalize(pool)?;
    let npt = tape.transpose(np)?;
    let cos = tape.matmul(nr, npt)?;
    let scaled = tape.mul_scalar(cos, 1.0 / tau)?;

    let mut pos_mask = Tensor::zeros(vec![l, 2 * l]);
    let mut den_mask = Tensor::full(vec![l, 2 * l], 1.0);
    for i in 0..l {
        pos_mask.set(i, l + i, 1.0);
        den_mask.set(i, i, 0.0);
    }

    // ln of the numerator is the scaled cosine itself.
    let pos_sel = tape.mul_const_mask(scaled, &pos_mask)?;
    let pos_logits = tape.row_sum(pos_sel)?;

    let exp = tape.exp(scaled)?;
    let exp_masked = tape.mul_const_mask(exp, &den_mask)?;
    let den = tape.row_sum(exp_masked)?;
    let log_den = tape.ln(den)?;

    let neg_pos = tape.mul_scalar(pos_logits, -1.0)?;
    let per_anchor = tape.add(log_den, neg_pos)?;
    tape.mean_all(per_anchor)
}

/// Value-level NT-Xent.
pub fn nt_xent(batch: &ViewBatch, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let zr = tape.leaf(batch.z_r.clone());
    let zs = tape.leaf(batch.z_s.clone());
    let loss = nt_xent_on_tape(&mut tape, zr, zs, tau)?;
    Ok(tape.value(loss).item())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_rec: f64,
    pub lambda_jse: f64,
    pub lambda_cl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_rec: 1.0,
            lambda_jse: 1.0,
            lambda_cl: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("lambda_rec", self.lambda_rec),
            ("lambda_jse", self.lambda_jse),
            ("lambda_cl", self.lambda_cl),
        ] {
            if !v.is_finite() || v < 0.0 {
                problems.push(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(VarsError::Config(problems.join("; ")))
        }
    }
}

/// Weighted sum of the three scalar component losses.
pub fn total_loss_on_tape(
    tape: &mut Tape,
    l_rec: Var,
    l_jse: Var,
    l_cl: Var,
    weights: &LossWeights,
) -> Result<Var> {
    weights.validate()?;
    for (name, v) in [("l_rec", l_rec), ("l_jse", l_jse), ("l_cl", l_cl)] {
        if tape.value(v).len() != 1 {
            return Err(VarsError::ShapeMismatch {
                op: "total_loss".into(),
                detail: format!("{name} is not a scalar: {:?}", tape.value(v).shape()),
            });
        }
    }
    let a = tape.mul_scalar(l_rec, weights.lambda_rec)?;
    let b = tape.mul_scalar(l_jse, weights.lambda_jse)?;
    let c = tape.mul_scalar(l_cl, weights.lambda_cl)?;
    let ab = tape.add(a, b)?;
    tape.add(ab, c)
}
