//! Reverse-mode automatic differentiation on an arena tape.
//!
//! A [`Tape`] records every operation as a node holding its inputs, its
//! computed value, and enough metadata to replay the chain rule backwards.
//! [`Var`] is an index into the arena; values are plain [`Tensor`]s, so
//! model parameters live outside the tape and are re-registered as leaves
//! for each forward pass. A tape is single-threaded by design: parallel
//! workloads build one tape per worker.
//!
//! Every forward op validates operand shapes and scans its output for
//! non-finite values, so a diverging computation fails at the op that
//! produced it rather than at the loss.

use crate::error::{Result, VarsError};
use crate::numerics::tensor::{matmul_raw, transpose_raw, Tensor};

/// Handle to a tape node. Only meaningful for the tape that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    MulScalar(Var, f64),
    AddScalar(Var),
    /// Multiply a matrix by a [1, 1] tape scalar.
    Scale(Var, Var),
    /// Elementwise product with a fixed tensor; no gradient into the mask.
    MulConstMask(Var, Tensor),
    /// `a[r x c] + broadcast of b[1 x c]` over rows.
    AddRowBroadcast(Var, Var),
    /// `a[r x c] * broadcast of b[1 x c]` over rows.
    MulRowBroadcast(Var, Var),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    /// Replace the listed rows of `a` with the single row `token`.
    MaskRows {
        a: Var,
        token: Var,
        rows: Vec<usize>,
    },
    RowSoftmax(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    PowScalar(Var, f64),
    Clamp(Var, f64, f64),
    /// Column means over all rows: [r x c] -> [1 x c].
    MeanRows(Var),
    /// Row sums: [r x c] -> [r x 1].
    RowSum(Var),
    SumAll(Var),
    MeanAll(Var),
    /// Rows scaled to unit L2 norm; zero rows stay zero.
    RowL2Normalize(Var),
    /// Hard edge selection with a straight-through gradient into the scores.
    ///
    /// Forward: an [n x n] matrix holding `adj[i][j]` for kept edges and zero
    /// elsewhere. Backward: kept edges pass gradient to `adj`; every listed
    /// edge passes `g * adj` to its score, as if the 0/1 keep decision were
    /// the identity in `scores`.
    StSelect {
        adj: Var,
        scores: Var,
        edges: Vec<(usize, usize)>,
        keep: Vec<bool>,
    },
    /// Per-row cross-entropy of logits against class indices: [r x C] -> [r x 1].
    CeWithLogits(Var, Vec<usize>),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads {
    by_node: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient of the root with respect to `v`, if any path reached it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node[v.0].as_ref()
    }

    /// Like [`Grads::get`] but materializes zeros for unreached vars.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        match &self.by_node[v.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var> {
        if !value.all_finite() {
            return Err(VarsError::NumericOverflow {
                op: op_name(&op).into(),
            });
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Register an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        // Leaves are caller-provided; finiteness is still enforced so bad
        // inputs fail at entry.
        self.push(Op::Leaf, value)
            .expect("non-finite leaf tensor")
    }

    fn shapes_2d(&self, v: Var, op: &str) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        if s.len() != 2 {
            return Err(VarsError::ShapeMismatch {
                op: op.into(),
                detail: format!("expected rank-2 operand, got shape {s:?}"),
            });
        }
        Ok((s[0], s[1]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(VarsError::ShapeMismatch {
                op: op.into(),
                detail: format!(
                    "{:?} vs {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, k) = self.shapes_2d(a, "matmul")?;
        let (k2, c) = self.shapes_2d(b, "matmul")?;
        if k != k2 {
            return Err(VarsError::ShapeMismatch {
                op: "matmul".into(),
                detail: format!("[{r} x {k}] * [{k2} x {c}]"),
            });
        }
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), r, k, c);
        self.push(Op::Matmul(a, b), Tensor::new(vec![r, c], data)?)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shapes_2d(a, "transpose")?;
        let data = transpose_raw(self.value(a).data(), r, c);
        self.push(Op::Transpose(a), Tensor::new(vec![c, r], data)?)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), data)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), data)
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul_elem")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::MulElem(a, b), data)
    }

    pub fn mul_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        let data = map(self.value(a), |x| x * k);
        self.push(Op::MulScalar(a, k), data)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        let data = map(self.value(a), |x| x + k);
        self.push(Op::AddScalar(a), data)
    }

    pub fn scale(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(VarsError::ShapeMismatch {
                op: "scale".into(),
                detail: format!("scale factor must be [1 x 1], got {:?}", self.value(s).shape()),
            });
        }
        let k = self.value(s).item();
        let data = map(self.value(a), |x| x * k);
        self.push(Op::Scale(a, s), data)
    }

    /// Elementwise product with a constant mask. The mask is data, not a
    /// differentiable operand; retained entries keep a live gradient path.
    pub fn mul_const_mask(&mut self, a: Var, mask: &Tensor) -> Result<Var> {
        if self.value(a).shape() != mask.shape() {
            return Err(VarsError::ShapeMismatch {
                op: "mul_const_mask".into(),
                detail: format!("{:?} vs mask {:?}", self.value(a).shape(), mask.shape()),
            });
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(mask.data())
            .map(|(x, m)| x * m)
            .collect();
        let value = Tensor::new(mask.shape().to_vec(), data)?;
        self.push(Op::MulConstMask(a, mask.clone()), value)
    }

    pub fn add_row_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.shapes_2d(a, "add_row_broadcast")?;
        let (rb, cb) = self.shapes_2d(b, "add_row_broadcast")?;
        if rb != 1 || cb != c {
            return Err(VarsError::ShapeMismatch {
                op: "add_row_broadcast".into(),
                detail: format!("[{r} x {c}] + [{rb} x {cb}]"),
            });
        }
        let bd = self.value(b).data().to_vec();
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + bd[i % c])
            .collect();
        let value = Tensor::new(vec![r, c], data)?;
        self.push(Op::AddRowBroadcast(a, b), value)
    }

    pub fn mul_row_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.shapes_2d(a, "mul_row_broadcast")?;
        let (rb, cb) = self.shapes_2d(b, "mul_row_broadcast")?;
        if rb != 1 || cb != c {
            return Err(VarsError::ShapeMismatch {
                op: "mul_row_broadcast".into(),
                detail: format!("[{r} x {c}] * [{rb} x {cb}]"),
            });
        }
        let bd = self.value(b).data().to_vec();
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x * bd[i % c])
            .collect();
        let value = Tensor::new(vec![r, c], data)?;
        self.push(Op::MulRowBroadcast(a, b), value)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, ca) = self.shapes_2d(a, "concat_cols")?;
        let (rb, cb) = self.shapes_2d(b, "concat_cols")?;
        if r != rb {
            return Err(VarsError::ShapeMismatch {
                op: "concat_cols".into(),
                detail: format!("row counts {r} vs {rb}"),
            });
        }
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(self.value(a).row(i));
            data.extend_from_slice(self.value(b).row(i));
        }
        let value = Tensor::new(vec![r, ca + cb], data)?;
        self.push(Op::ConcatCols(a, b), value)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(VarsError::Contract("concat_rows needs at least one part".into()));
        }
        let (_, c) = self.shapes_2d(parts[0], "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (rp, cp) = self.shapes_2d(p, "concat_rows")?;
            if cp != c {
                return Err(VarsError::ShapeMismatch {
                    op: "concat_rows".into(),
                    detail: format!("column counts {c} vs {cp}"),
                });
            }
            rows += rp;
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::new(vec![rows, c], data)?;
        self.push(Op::ConcatRows(parts.to_vec()), value)
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.shapes_2d(a, "gather_rows")?;
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(VarsError::Contract(format!(
                "gather_rows index {bad} out of range for {r} rows"
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            data.extend_from_slice(self.value(a).row(i));
        }
        let value = Tensor::new(vec![rows.len(), c], data)?;
        self.push(Op::GatherRows(a, rows.to_vec()), value)
    }

    /// Replace the listed rows of `a` with the learnable row `token`.
    pub fn mask_rows(&mut self, a: Var, token: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.shapes_2d(a, "mask_rows")?;
        let (rt, ct) = self.shapes_2d(token, "mask_rows")?;
        if rt != 1 || ct != c {
            return Err(VarsError::ShapeMismatch {
                op: "mask_rows".into(),
                detail: format!("token must be [1 x {c}], got [{rt} x {ct}]"),
            });
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(VarsError::Contract(format!(
                "mask_rows index {bad} out of range for {r} rows"
            )));
        }
        let mut value = self.value(a).clone();
        let tok = self.value(token).data().to_vec();
        for &i in rows {
            value.data_mut()[i * c..(i + 1) * c].copy_from_slice(&tok);
        }
        self.push(
            Op::MaskRows {
                a,
                token,
                rows: rows.to_vec(),
            },
            value,
        )
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shapes_2d(a, "row_softmax")?;
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = self.value(a).row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|e| e / z));
        }
        let value = Tensor::new(vec![r, c], data)?;
        self.push(Op::RowSoftmax(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let data = map(self.value(a), sigmoid_stable);
        self.push(Op::Sigmoid(a), data)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let data = map(self.value(a), |x| x.max(0.0));
        self.push(Op::Relu(a), data)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let data = map(self.value(a), f64::exp);
        self.push(Op::Exp(a), data)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let data = map(self.value(a), f64::ln);
        self.push(Op::Ln(a), data)
    }

    pub fn pow_scalar(&mut self, a: Var, p: f64) -> Result<Var> {
        let data = map(self.value(a), |x| x.powf(p));
        self.push(Op::PowScalar(a, p), data)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let data = map(self.value(a), |x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), data)
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shapes_2d(a, "mean_rows")?;
        if r == 0 {
            return Err(VarsError::Contract("mean_rows over zero rows".into()));
        }
        let mut sums = vec![0.0; c];
        for i in 0..r {
            for (j, s) in sums.iter_mut().enumerate() {
                *s += self.value(a).at(i, j);
            }
        }
        for s in sums.iter_mut() {
            *s /= r as f64;
        }
        let value = Tensor::new(vec![1, c], sums)?;
        self.push(Op::MeanRows(a), value)
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let (r, _) = self.shapes_2d(a, "row_sum")?;
        let mut data = Vec::with_capacity(r);
        for i in 0..r {
            data.push(self.value(a).row(i).iter().sum());
        }
        let value = Tensor::new(vec![r, 1], data)?;
        self.push(Op::RowSum(a), value)
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::SumAll(a), Tensor::scalar(s))
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(VarsError::Contract("mean_all over zero elements".into()));
        }
        let s: f64 = self.value(a).data().iter().sum::<f64>() / n as f64;
        self.push(Op::MeanAll(a), Tensor::scalar(s))
    }

    /// Row-wise cosine similarity: [r x c], [r x c] -> [r x 1]. Any row pair
    /// involving a zero-norm vector yields cosine 0 with zero gradient.
    pub fn cos_rowwise(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "cos_rowwise")?;
        let na = self.row_l2_normalize(a)?;
        let nb = self.row_l2_normalize(b)?;
        let prod = self.mul_elem(na, nb)?;
        self.row_sum(prod)
    }

    /// Scale each row to unit L2 norm. A row of exact zeros stays zero and
    /// carries zero gradient; callers treat downstream cosines against such
    /// rows as zero.
    pub fn row_l2_normalize(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shapes_2d(a, "row_l2_normalize")?;
        let mut data = Vec::with_capacity(r * c);
        let mut zero_rows = 0usize;
        for i in 0..r {
            let row = self.value(a).row(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                zero_rows += 1;
                data.extend(std::iter::repeat(0.0).take(c));
            } else {
                data.extend(row.iter().map(|x| x / norm));
            }
        }
        if zero_rows > 0 {
            log::warn!("row_l2_normalize: {zero_rows} zero-norm row(s) treated as zero vectors");
        }
        let value = Tensor::new(vec![r, c], data)?;
        self.push(Op::RowL2Normalize(a), value)
    }

    /// Build an [n x n] matrix holding `adj`'s weight on kept edges and zero
    /// everywhere else. `keep[e]` is the hard selection for `edges[e]`; the
    /// backward pass routes a straight-through gradient into `scores[e]`.
    pub fn st_select(
        &mut self,
        adj: Var,
        scores: Var,
        edges: &[(usize, usize)],
        keep: &[bool],
    ) -> Result<Var> {
        let (n, n2) = self.shapes_2d(adj, "st_select")?;
        if n != n2 {
            return Err(VarsError::ShapeMismatch {
                op: "st_select".into(),
                detail: format!("adjacency must be square, got [{n} x {n2}]"),
            });
        }
        let (e, one) = self.shapes_2d(scores, "st_select")?;
        if one != 1 || e != edges.len() || keep.len() != edges.len() {
            return Err(VarsError::ShapeMismatch {
                op: "st_select".into(),
                detail: format!(
                    "scores [{e} x {one}] vs {} edges, {} keep flags",
                    edges.len(),
                    keep.len()
                ),
            });
        }
        if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= n || j >= n) {
            return Err(VarsError::Contract(format!(
                "st_select edge ({i}, {j}) out of range for {n} nodes"
            )));
        }
        let mut out = Tensor::zeros(vec![n, n]);
        for (e, &(i, j)) in edges.iter().enumerate() {
            if keep[e] {
                out.set(i, j, self.value(adj).at(i, j));
            }
        }
        self.push(
            Op::StSelect {
                adj,
                scores,
                edges: edges.to_vec(),
                keep: keep.to_vec(),
            },
            out,
        )
    }

    /// Per-row softmax cross-entropy against integer class targets.
    pub fn ce_with_logits(&mut self, a: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.shapes_2d(a, "ce_with_logits")?;
        if targets.len() != r {
            return Err(VarsError::ShapeMismatch {
                op: "ce_with_logits".into(),
                detail: format!("{r} rows vs {} targets", targets.len()),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(VarsError::Contract(format!(
                "ce_with_logits target {bad} out of range for {c} classes"
            )));
        }
        let mut data = Vec::with_capacity(r);
        for i in 0..r {
            let row = self.value(a).row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            data.push(lse - row[targets[i]]);
        }
        let value = Tensor::new(vec![r, 1], data)?;
        self.push(Op::CeWithLogits(a, targets.to_vec()), value)
    }

    /// Propagate gradients from a scalar `root` back to every reachable var.
    pub fn backward(&self, root: Var) -> Result<Grads> {
        if self.value(root).len() != 1 {
            return Err(VarsError::Contract(format!(
                "backward root must be a scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.value(root).shape().to_vec(), 1.0));

        // Nodes only reference earlier nodes, so index order is already a
        // topological order; walk it in reverse.
        for idx in (0..=root.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Grads { by_node: grads })
    }

    fn accumulate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (r, k) = (self.value(*a).rows(), self.value(*a).cols());
                let c = self.value(*b).cols();
                let bt = transpose_raw(self.value(*b).data(), k, c);
                let da = matmul_raw(g.data(), &bt, r, c, k);
                add_into(grads, *a, &da, self.value(*a).shape());
                let at = transpose_raw(self.value(*a).data(), r, k);
                let db = matmul_raw(&at, g.data(), k, r, c);
                add_into(grads, *b, &db, self.value(*b).shape());
            }
            Op::Transpose(a) => {
                let (c, r) = (node.value.rows(), node.value.cols());
                let da = transpose_raw(g.data(), c, r);
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::Add(a, b) => {
                add_into(grads, *a, g.data(), self.value(*a).shape());
                add_into(grads, *b, g.data(), self.value(*b).shape());
            }
            Op::Sub(a, b) => {
                add_into(grads, *a, g.data(), self.value(*a).shape());
                let neg: Vec<f64> = g.data().iter().map(|x| -x).collect();
                add_into(grads, *b, &neg, self.value(*b).shape());
            }
            Op::MulElem(a, b) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(*b).data())
                    .map(|(g, y)| g * y)
                    .collect();
                add_into(grads, *a, &da, self.value(*a).shape());
                let db: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, x)| g * x)
                    .collect();
                add_into(grads, *b, &db, self.value(*b).shape());
            }
            Op::MulScalar(a, k) => {
                let da: Vec<f64> = g.data().iter().map(|g| g * k).collect();
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::AddScalar(a) => {
                add_into(grads, *a, g.data(), self.value(*a).shape());
            }
            Op::Scale(a, s) => {
                let k = self.value(*s).item();
                let da: Vec<f64> = g.data().iter().map(|g| g * k).collect();
                add_into(grads, *a, &da, self.value(*a).shape());
                let ds: f64 = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, x)| g * x)
                    .sum();
                add_into(grads, *s, &[ds], self.value(*s).shape());
            }
            Op::MulConstMask(a, mask) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(mask.data())
                    .map(|(g, m)| g * m)
                    .collect();
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::AddRowBroadcast(a, b) => {
                add_into(grads, *a, g.data(), self.value(*a).shape());
                let c = self.value(*b).cols();
                let mut db = vec![0.0; c];
                for (i, gv) in g.data().iter().enumerate() {
                    db[i % c] += gv;
                }
                add_into(grads, *b, &db, self.value(*b).shape());
            }
            Op::MulRowBroadcast(a, b) => {
                let c = self.value(*b).cols();
                let bd = self.value(*b).data();
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * bd[i % c])
                    .collect();
                add_into(grads, *a, &da, self.value(*a).shape());
                let mut db = vec![0.0; c];
                for (i, gv) in g.data().iter().enumerate() {
                    db[i % c] += gv * self.value(*a).data()[i];
                }
                add_into(grads, *b, &db, self.value(*b).shape());
            }
            Op::ConcatCols(a, b) => {
                let (r, ca) = (self.value(*a).rows(), self.value(*a).cols());
                let cb = self.value(*b).cols();
                let mut da = vec![0.0; r * ca];
                let mut db = vec![0.0; r * cb];
                for i in 0..r {
                    let grow = g.row(i);
                    da[i * ca..(i + 1) * ca].copy_from_slice(&grow[..ca]);
                    db[i * cb..(i + 1) * cb].copy_from_slice(&grow[ca..]);
                }
                add_into(grads, *a, &da, self.value(*a).shape());
                add_into(grads, *b, &db, self.value(*b).shape());
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rp, cp) = (self.value(p).rows(), self.value(p).cols());
                    let slice = &g.data()[offset..offset + rp * cp];
                    add_into(grads, p, slice, self.value(p).shape());
                    offset += rp * cp;
                }
            }
            Op::GatherRows(a, rows) => {
                let (ra, c) = (self.value(*a).rows(), self.value(*a).cols());
                let mut da = vec![0.0; ra * c];
                for (k, &i) in rows.iter().enumerate() {
                    for j in 0..c {
                        da[i * c + j] += g.at(k, j);
                    }
                }
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::MaskRows { a, token, rows } => {
                let (r, c) = (self.value(*a).rows(), self.value(*a).cols());
                let masked: std::collections::HashSet<usize> = rows.iter().copied().collect();
                let mut da = vec![0.0; r * c];
                let mut dtok = vec![0.0; c];
                for i in 0..r {
                    if masked.contains(&i) {
                        for j in 0..c {
                            dtok[j] += g.at(i, j);
                        }
                    } else {
                        da[i * c..(i + 1) * c].copy_from_slice(g.row(i));
                    }
                }
                add_into(grads, *a, &da, self.value(*a).shape());
                add_into(grads, *token, &dtok, self.value(*token).shape());
            }
            Op::RowSoftmax(a) => {
                let (r, c) = (node.value.rows(), node.value.cols());
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    let y = node.value.row(i);
                    let grow = g.row(i);
                    let dot: f64 = grow.iter().zip(y).map(|(g, y)| g * y).sum();
                    for j in 0..c {
                        da[i * c + j] = y[j] * (grow[j] - dot);
                    }
                }
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::Sigmoid(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::Relu(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::Exp(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * y)
                    .collect();
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::Ln(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, x)| g / x)
                    .collect();
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::PowScalar(a, p) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, x)| {
                        if *p == 1.0 {
                            *g
                        } else {
                            g * p * x.powf(p - 1.0)
                        }
                    })
                    .collect();
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::Clamp(a, lo, hi) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, x)| if *x >= *lo && *x <= *hi { *g } else { 0.0 })
                    .collect();
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::MeanRows(a) => {
                let (r, c) = (self.value(*a).rows(), self.value(*a).cols());
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = g.data()[j] / r as f64;
                    }
                }
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::RowSum(a) => {
                let (r, c) = (self.value(*a).rows(), self.value(*a).cols());
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = g.data()[i];
                    }
                }
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::SumAll(a) => {
                let gv = g.item();
                let da = vec![gv; self.value(*a).len()];
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::MeanAll(a) => {
                let n = self.value(*a).len();
                let gv = g.item() / n as f64;
                let da = vec![gv; n];
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::RowL2Normalize(a) => {
                let (r, c) = (self.value(*a).rows(), self.value(*a).cols());
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    let x = self.value(*a).row(i);
                    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    let y = node.value.row(i);
                    let grow = g.row(i);
                    let dot: f64 = grow.iter().zip(y).map(|(g, y)| g * y).sum();
                    for j in 0..c {
                        da[i * c + j] = (grow[j] - dot * y[j]) / norm;
                    }
                }
                add_into(grads, *a, &da, self.value(*a).shape());
            }
            Op::StSelect {
                adj,
                scores,
                edges,
                keep,
            } => {
                let n = self.value(*adj).rows();
                let mut dadj = vec![0.0; n * n];
                let mut dscores = vec![0.0; edges.len()];
                for (e, &(i, j)) in edges.iter().enumerate() {
                    let gv = g.at(i, j);
                    if keep[e] {
                        dadj[i * n + j] += gv;
                    }
                    dscores[e] += gv * self.value(*adj).at(i, j);
                }
                add_into(grads, *adj, &dadj, self.value(*adj).shape());
                add_into(grads, *scores, &dscores, self.value(*scores).shape());
            }
            Op::CeWithLogits(a, targets) => {
                let (r, c) = (self.value(*a).rows(), self.value(*a).cols());
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    let row = self.value(*a).row(i);
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    let gv = g.at(i, 0);
                    for j in 0..c {
                        let p = exps[j] / z;
                        da[i * c + j] = gv * (p - if j == targets[i] { 1.0 } else { 0.0 });
                    }
                }
                add_into(grads, *a, &da, self.value(*a).shape());
            }
        }
    }

    /// Rough floating-point operation count for everything recorded so far.
    /// Matrix products count 2 * r * k * c; elementwise ops count one per
    /// output element; transcendental ops count four.
    pub fn flop_estimate(&self) -> u64 {
        let mut total: u64 = 0;
        for node in &self.nodes {
            let len = node.value.len() as u64;
            total += match &node.op {
                Op::Leaf => 0,
                Op::Matmul(a, b) => {
                    let k = self.value(*a).cols() as u64;
                    let r = self.value(*a).rows() as u64;
                    let c = self.value(*b).cols() as u64;
                    2 * r * k * c
                }
                Op::Sigmoid(_) | Op::Exp(_) | Op::Ln(_) | Op::PowScalar(..) => 4 * len,
                Op::RowSoftmax(_) | Op::CeWithLogits(..) => 6 * len,
                Op::RowL2Normalize(_) => 3 * len,
                _ => len,
            };
        }
        total
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Matmul(..) => "matmul",
        Op::Transpose(..) => "transpose",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::MulElem(..) => "mul_elem",
        Op::MulScalar(..) => "mul_scalar",
        Op::AddScalar(_) => "add_scalar",
        Op::Scale(..) => "scale",
        Op::MulConstMask(..) => "mul_const_mask",
        Op::AddRowBroadcast(..) => "add_row_broadcast",
        Op::MulRowBroadcast(..) => "mul_row_broadcast",
        Op::ConcatCols(..) => "concat_cols",
        Op::ConcatRows(..) => "concat_rows",
        Op::GatherRows(..) => "gather_rows",
        Op::MaskRows { .. } => "mask_rows",
        Op::RowSoftmax(..) => "row_softmax",
        Op::Sigmoid(..) => "sigmoid",
        Op::Relu(..) => "relu",
        Op::Exp(..) => "exp",
        Op::Ln(..) => "ln",
        Op::PowScalar(..) => "pow_scalar",
        Op::Clamp(..) => "clamp",
        Op::MeanRows(..) => "mean_rows",
        Op::RowSum(..) => "row_sum",
        Op::SumAll(..) => "sum_all",
        Op::MeanAll(..) => "mean_all",
        Op::RowL2Normalize(..) => "row_l2_normalize",
        Op::StSelect { .. } => "st_select",
        Op::CeWithLogits(..) => "ce_with_logits",
    }
}

fn sigmoid_stable(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data: Vec<f64> = t.data().iter().map(|&x| f(x)).collect();
    Tensor::new(t.shape().to_vec(), data).expect("map preserves shape")
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map preserves shape")
}

fn add_into(grads: &mut [Option<Tensor>], v: Var, delta: &[f64], shape: &[usize]) {
    let slot = &mut grads[v.0];
    match slot {
        Some(t) => {
            for (dst, d) in t.data_mut().iter_mut().zip(delta) {
                *dst += d;
            }
        }
        None => {
            let t = Tensor::new(shape.to_vec(), delta.to_vec()).expect("gradient shape");
            *slot = Some(t);
        }
    }
}

/// Compare analytic gradients against central finite differences.
///
/// `f` rebuilds the scalar objective from leaves registered in input order.
/// Returns the largest normalized error over every input element, where the
/// normalization is `max(1, |analytic|)`.
pub fn finite_difference_check<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], input.shape());
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += eps;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= eps;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / 1.0_f64.max(a.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
