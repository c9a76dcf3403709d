//! GIN encoder/decoder and masked-node reconstruction.
//!
//! Each GIN layer computes MLP((1 + eps) * h_i + sum_j A_ij * h_j) with a
//! learnable eps and a two-affine MLP (ReLU between). The encoder stacks two
//! layers (d -> h -> h); the decoder is one layer back to d. Masked-node
//! denoising replaces a sampled subset of node rows with a learnable token,
//! encodes the perturbed features, decodes them back to feature space, and
//! scores reconstruction with a scaled cosine error over the masked rows
//! only.

use crate::error::{Result, VarsError};
use crate::numerics::{DetRng, Tape, Tensor, Var};

/// One GIN layer: learnable eps plus a two-affine MLP.
#[derive(Clone, Debug)]
pub struct GinLayerParams {
    /// [1 x 1] learnable self-weight offset.
    pub epsilon: Tensor,
    /// [in x hidden]
    pub w1: Tensor,
    /// [1 x hidden]
    pub b1: Tensor,
    /// [hidden x out]
    pub w2: Tensor,
    /// [1 x out]
    pub b2: Tensor,
}

impl GinLayerParams {
    pub fn init(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut DetRng) -> Self {
        let affine = |rows: usize, cols: usize, rng: &mut DetRng| {
            let sd = 1.0 / (rows as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols).map(|_| sd * rng.normal()).collect();
            Tensor::new(vec![rows, cols], data).expect("affine shape")
        };
        GinLayerParams {
            epsilon: Tensor::scalar(0.0),
            w1: affine(in_dim, hidden, rng),
            b1: Tensor::zeros(vec![1, hidden]),
            w2: affine(hidden, out_dim, rng),
            b2: Tensor::zeros(vec![1, out_dim]),
        }
    }

    /// Identity fixture: eps 0, both affines the identity. Only valid when
    /// all three dims are equal; exact only on non-negative activations
    /// (the inner ReLU).
    pub fn identity(dim: usize) -> Self {
        GinLayerParams {
            epsilon: Tensor::scalar(0.0),
            w1: Tensor::eye(dim),
            b1: Tensor::zeros(vec![1, dim]),
            w2: Tensor::eye(dim),
            b2: Tensor::zeros(vec![1, dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.cols()
    }
}

/// Tape registration of one layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct GinLayerVars {
    pub epsilon: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl GinLayerParams {
    pub fn on_tape(&self, tape: &mut Tape) -> GinLayerVars {
        GinLayerVars {
            epsilon: tape.leaf(self.epsilon.clone()),
            w1: tape.leaf(self.w1.clone()),
            b1: tape.leaf(self.b1.clone()),
            w2: tape.leaf(self.w2.clone()),
            b2: tape.leaf(self.b2.clone()),
        }
    }
}

/// Encoder + decoder + mask token.
#[derive(Clone, Debug)]
pub struct EncoderState {
    pub encoder: Vec<GinLayerParams>,
    pub decoder: Vec<GinLayerParams>,
    /// [1 x d] learnable replacement row for masked nodes.
    pub mask_token: Tensor,
}

impl EncoderState {
    /// Two encoder layers d -> h -> h, one decoder layer h -> d.
    pub fn init(d: usize, h: usize, rng: &mut DetRng) -> Self {
        let encoder = vec![
            GinLayerParams::init(d, h, h, rng),
            GinLayerParams::init(h, h, h, rng),
        ];
        let decoder = vec![GinLayerParams::init(h, h, d, rng)];
        // Small nonzero init so masked rows never produce zero-norm
        // embeddings before training starts.
        let token: Vec<f64> = (0..d).map(|_| 0.01 * rng.normal()).collect();
        EncoderState {
            encoder,
            decoder,
            mask_token: Tensor::new(vec![1, d], token).expect("token shape"),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.last().expect("nonempty encoder").out_dim()
    }
}

/// Which nodes were masked for one reconstruction pass.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPlan {
    /// Sorted unique node indices.
    pub masked: Vec<usize>,
    pub rate: f64,
}

/// Choose round(rate * n) nodes uniformly without replacement, at least one.
pub fn plan_mask(n: usize, rate: f64, rng: &mut DetRng) -> Result<MaskPlan> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(VarsError::Config(format!(
            "mask rate must lie in (0, 1), got {rate}"
        )));
    }
    if n == 0 {
        return Err(VarsError::Contract("cannot mask an empty graph".into()));
    }
    let count = ((rate * n as f64).round() as usize).clamp(1, n);
    Ok(MaskPlan {
        masked: rng.sample_indices(n, count),
        rate,
    })
}

/// One GIN layer on the tape.
pub fn gin_layer_on_tape(tape: &mut Tape, layer: &GinLayerVars, a: Var, h: Var) -> Result<Var> {
    let self_scaled = tape.scale(h, layer.epsilon)?;
    let self_term = tape.add(h, self_scaled)?;
    let neighbors = tape.matmul(a, h)?;
    let agg = tape.add(self_term, neighbors)?;
    let z1 = tape.matmul(agg, layer.w1)?;
    let z1b = tape.add_row_broadcast(z1, layer.b1)?;
    let hidden = tape.relu(z1b)?;
    let z2 = tape.matmul(hidden, layer.w2)?;
    tape.add_row_broadcast(z2, layer.b2)
}

/// Stack of GIN layers.
pub fn gin_forward_on_tape(
    tape: &mut Tape,
    layers: &[GinLayerVars],
    a: Var,
    h_in: Var,
) -> Result<Var> {
    let mut h = h_in;
    for layer in layers {
        h = gin_layer_on_tape(tape, layer, a, h)?;
    }
    Ok(h)
}

/// Node embeddings and mean-pooled graph embedding.
pub fn encode_on_tape(
    tape: &mut Tape,
    layers: &[GinLayerVars],
    a: Var,
    x: Var,
) -> Result<(Var, Var)> {
    let h = gin_forward_on_tape(tape, layers, a, x)?;
    let z = tape.mean_rows(h)?;
    Ok((h, z))
}

/// Masked-node reconstruction: returns (x_rec, h_masked).
pub fn reconstruct_on_tape(
    tape: &mut Tape,
    encoder: &[GinLayerVars],
    decoder: &[GinLayerVars],
    mask_token: Var,
    a: Var,
    x: Var,
    plan: &MaskPlan,
) -> Result<(Var, Var)> {
    let x_masked = tape.mask_rows(x, mask_token, &plan.masked)?;
    let (h_masked, _) = encode_on_tape(tape, encoder, a, x_masked)?;
    let x_rec = gin_forward_on_tape(tape, decoder, a, h_masked)?;
    Ok((x_rec, h_masked))
}

/// Scaled cosine error over the masked rows:
/// (1/|masked|) * sum (1 - cos(x_i, x_rec_i))^gamma. A zero-norm row on
/// either side contributes via the cos = 0 convention (term 1^gamma); the
/// underlying normalize op logs a warning when that happens.
pub fn scaled_cosine_error_on_tape(
    tape: &mut Tape,
    x: Var,
    x_rec: Var,
    plan: &MaskPlan,
    gamma: f64,
) -> Result<Var> {
    if gamma < 1.0 {
        return Err(VarsError::Config(format!(
            "cosine error scale must be at least 1, got {gamma}"
        )));
    }
    if plan.masked.is_empty() {
        return Err(VarsError::Contract("mask plan is empty".into()));
    }
    let xg = tape.gather_rows(x, &plan.masked)?;
    let rg = tape.gather_rows(x_rec, &plan.masked)?;
    let cos = tape.cos_rowwise(xg, rg)?;
    let neg = tape.mul_scalar(cos, -1.0)?;
    let one_minus = tape.add_scalar(neg, 1.0)?;
    let powed = tape.pow_scalar(one_minus, gamma)?;
    tape.mean_all(powed)
}

/// Value-level scaled cosine error.
pub fn scaled_cosine_error(x: &Tensor, x_rec: &Tensor, plan: &MaskPlan, gamma: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let rv = tape.leaf(x_rec.clone());
    let loss = scaled_cosine_error_on_tape(&mut tape, xv, rv, plan, gamma)?;
    Ok(tape.value(loss).item())
}
