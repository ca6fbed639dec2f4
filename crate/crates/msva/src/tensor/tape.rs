//! The computation tape: forward ops recorded in topological order, replayed
//! in reverse for gradient accumulation.

use crate::rng::SeededRng;

use super::{Mask, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Elementwise nonlinearity kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl std::str::FromStr for Activation {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(TensorError::Config(format!(
                "unknown activation kind {other:?}"
            ))),
        }
    }
}

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    grad: Vec<f64>,
}

enum Op {
    Leaf,
    MatMul { a: usize, b: usize },
    Transpose { a: usize },
    Affine { x: usize, w: usize, b: usize },
    Add { a: usize, b: usize },
    Scale { a: usize, factor: f64 },
    MaskedSoftmax { a: usize, mask: Mask },
    LayerNorm { x: usize, gain: usize, bias: usize, eps: f64 },
    Relu { a: usize },
    Sigmoid { a: usize },
    Dropout { a: usize, keep: Vec<f64> },
    Sum { a: usize },
    Reshape { a: usize },
    MseLoss { pred: usize, target: usize },
}

/// Records one forward computation and differentiates it in reverse.
///
/// Nodes are appended in execution order, so every op's inputs precede it and
/// a single reverse sweep visits each node exactly once.
pub struct Tape {
    nodes: Vec<Node>,
    ops: Vec<Op>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            ops: Vec::new(),
        }
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, op: Op) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            data,
            shape,
            grad: Vec::new(),
        });
        self.ops.push(op);
        NodeId(id)
    }

    /// Registers a tensor as a leaf node (copies its data).
    pub fn leaf(&mut self, t: &Tensor) -> NodeId {
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf)
    }

    /// Registers raw data as a leaf node.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<NodeId, TensorError> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn data(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Gradient of the last `backward` target w.r.t. this node.
    /// Empty until `backward` has run.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    /// Extracts a node's value as a plain tensor.
    pub fn value(&self, id: NodeId) -> Tensor {
        let node = &self.nodes[id.0];
        Tensor::new(node.shape.clone(), node.data.clone()).expect("tape nodes are consistent")
    }

    /// Copies computed gradients back into the source tensors' grad slots.
    /// Tensors with `requires_grad = false` keep `grad = None`.
    pub fn write_grads(&self, ids: &[NodeId], tensors: &mut [&mut Tensor]) {
        for (id, t) in ids.iter().zip(tensors.iter_mut()) {
            if t.requires_grad {
                t.grad = Some(self.grad(*id).to_vec());
            }
        }
    }

    fn dims2(&self, id: NodeId, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.nodes[id.0].shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(TensorError::NotAMatrix {
                op,
                shape: other.to_vec(),
            }),
        }
    }

    // ---- forward ops ----------------------------------------------------

    /// `a[m*k] . b[k*n] -> [m*n]`
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        let data = matmul_raw(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n);
        Ok(self.push(data, vec![m, n], Op::MatMul { a: a.0, b: b.0 }))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a, "transpose")?;
        let src = &self.nodes[a.0].data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        Ok(self.push(data, vec![c, r], Op::Transpose { a: a.0 }))
    }

    /// `x[t*d_in] . w[d_in*d_out] + b[d_out]`, bias broadcast over rows.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (t, d_in) = self.dims2(x, "affine")?;
        let (wi, d_out) = self.dims2(w, "affine")?;
        let b_shape = self.nodes[b.0].shape.clone();
        if wi != d_in || b_shape != vec![d_out] {
            return Err(TensorError::ShapeMismatch {
                op: "affine",
                lhs: self.nodes[x.0].shape.clone(),
                rhs: if wi != d_in {
                    self.nodes[w.0].shape.clone()
                } else {
                    b_shape
                },
            });
        }
        let mut data = matmul_raw(&self.nodes[x.0].data, &self.nodes[w.0].data, t, d_in, d_out);
        let bias = &self.nodes[b.0].data;
        for row in 0..t {
            for col in 0..d_out {
                data[row * d_out + col] += bias[col];
            }
        }
        Ok(self.push(
            data,
            vec![t, d_out],
            Op::Affine {
                x: x.0,
                w: w.0,
                b: b.0,
            },
        ))
    }

    /// Elementwise sum of two same-shape nodes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(self.nodes[b.0].data.iter())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(data, shape, Op::Add { a: a.0, b: b.0 }))
    }

    /// Multiplies every element by a constant.
    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, TensorError> {
        if !factor.is_finite() {
            return Err(TensorError::Config(format!(
                "scale factor must be finite, got {factor}"
            )));
        }
        let data = self.nodes[a.0].data.iter().map(|x| x * factor).collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(data, shape, Op::Scale { a: a.0, factor }))
    }

    /// Row-wise softmax restricted to the mask. Masked-out entries are
    /// exactly zero; each row is stabilized by subtracting its in-mask
    /// maximum. Every mask row must contain at least one true entry.
    pub fn masked_softmax(&mut self, a: NodeId, mask: &Mask) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a, "masked_softmax")?;
        if mask.rows() != r || mask.cols() != c {
            return Err(TensorError::ShapeMismatch {
                op: "masked_softmax",
                lhs: vec![r, c],
                rhs: vec![mask.rows(), mask.cols()],
            });
        }
        let src = &self.nodes[a.0].data;
        let mut data = vec![0.0; r * c];
        for row in 0..r {
            if mask.row_count(row) == 0 {
                return Err(TensorError::EmptyMaskRow { row });
            }
            let mut max = f64::NEG_INFINITY;
            for col in 0..c {
                if mask.get(row, col) {
                    max = max.max(src[row * c + col]);
                }
            }
            let mut sum = 0.0;
            for col in 0..c {
                if mask.get(row, col) {
                    let e = (src[row * c + col] - max).exp();
                    data[row * c + col] = e;
                    sum += e;
                }
            }
            for col in 0..c {
                if mask.get(row, col) {
                    data[row * c + col] /= sum;
                }
            }
        }
        Ok(self.push(
            data,
            vec![r, c],
            Op::MaskedSoftmax {
                a: a.0,
                mask: mask.clone(),
            },
        ))
    }

    /// Per-row normalization to zero mean / unit variance, then elementwise
    /// gain and bias of width `d`.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId, TensorError> {
        if !eps.is_finite() || eps <= 0.0 {
            return Err(TensorError::Config(format!(
                "layer_norm eps must be positive, got {eps}"
            )));
        }
        let (t, d) = self.dims2(x, "layer_norm")?;
        if self.nodes[gain.0].shape != vec![d] || self.nodes[bias.0].shape != vec![d] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: vec![t, d],
                rhs: self.nodes[gain.0].shape.clone(),
            });
        }
        let src = &self.nodes[x.0].data;
        let g = &self.nodes[gain.0].data;
        let b = &self.nodes[bias.0].data;
        let mut data = vec![0.0; t * d];
        for row in 0..t {
            let slice = &src[row * d..(row + 1) * d];
            let mean = slice.iter().sum::<f64>() / d as f64;
            let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for col in 0..d {
                data[row * d + col] = (slice[col] - mean) * inv_std * g[col] + b[col];
            }
        }
        Ok(self.push(
            data,
            vec![t, d],
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                eps,
            },
        ))
    }

    pub fn activation(&mut self, kind: Activation, a: NodeId) -> NodeId {
        match kind {
            Activation::Relu => self.relu(a),
            Activation::Sigmoid => self.sigmoid(a),
        }
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let data = self.nodes[a.0].data.iter().map(|&x| x.max(0.0)).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(data, shape, Op::Relu { a: a.0 })
    }

    /// Numerically saturating sigmoid; outputs lie strictly inside (0, 1).
    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let data = self.nodes[a.0].data.iter().map(|&x| sigmoid(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(data, shape, Op::Sigmoid { a: a.0 })
    }

    /// Inverted dropout: while training, each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`, so
    /// inference (`training = false`) is the identity.
    pub fn dropout(
        &mut self,
        a: NodeId,
        rate: f64,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<NodeId, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        let n = self.nodes[a.0].data.len();
        let keep: Vec<f64> = if training && rate > 0.0 {
            let scale = 1.0 / (1.0 - rate);
            (0..n)
                .map(|_| if rng.uniform() < rate { 0.0 } else { scale })
                .collect()
        } else {
            vec![1.0; n]
        };
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(keep.iter())
            .map(|(x, k)| x * k)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(data, shape, Op::Dropout { a: a.0, keep }))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].data.iter().sum();
        self.push(vec![s], vec![1], Op::Sum { a: a.0 })
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[a.0].data.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                len: self.nodes[a.0].data.len(),
            });
        }
        let data = self.nodes[a.0].data.clone();
        Ok(self.push(data, shape, Op::Reshape { a: a.0 }))
    }

    /// Mean squared error between two same-shape nodes, as a scalar node.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, TensorError> {
        if self.nodes[pred.0].shape != self.nodes[target.0].shape {
            return Err(TensorError::ShapeMismatch {
                op: "mse_loss",
                lhs: self.nodes[pred.0].shape.clone(),
                rhs: self.nodes[target.0].shape.clone(),
            });
        }
        let n = self.nodes[pred.0].data.len() as f64;
        let mut acc = 0.0;
        for (p, t) in self.nodes[pred.0]
            .data
            .iter()
            .zip(self.nodes[target.0].data.iter())
        {
            let d = p - t;
            acc += d * d;
        }
        Ok(self.push(
            vec![acc / n],
            vec![1],
            Op::MseLoss {
                pred: pred.0,
                target: target.0,
            },
        ))
    }

    // ---- backward --------------------------------------------------------

    /// Reverse-topological gradient accumulation from a scalar node.
    ///
    /// Every node at or before `loss` receives a gradient buffer; leaves not
    /// connected to the loss keep all-zero gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::Contract(
                "backward target is not on this tape".into(),
            ));
        }
        if self.nodes[loss.0].data.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward target must be scalar, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        for node in self.nodes.iter_mut() {
            node.grad = vec![0.0; node.data.len()];
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for i in (0..=loss.0).rev() {
            // Split borrows: the grad of node i drives accumulation into its inputs.
            let grad = std::mem::take(&mut self.nodes[i].grad);
            match &self.ops[i] {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (a, b) = (*a, *b);
                    let m = self.nodes[a].shape[0];
                    let k = self.nodes[a].shape[1];
                    let n = self.nodes[b].shape[1];
                    // dA = dC . B^T
                    let mut bt = vec![0.0; k * n];
                    for p in 0..k {
                        for q in 0..n {
                            bt[q * k + p] = self.nodes[b].data[p * n + q];
                        }
                    }
                    let da = matmul_raw(&grad, &bt, m, n, k);
                    // dB = A^T . dC
                    let mut at = vec![0.0; m * k];
                    for p in 0..m {
                        for q in 0..k {
                            at[q * m + p] = self.nodes[a].data[p * k + q];
                        }
                    }
                    let db = matmul_raw(&at, &grad, k, m, n);
                    accumulate(&mut self.nodes[a].grad, &da);
                    accumulate(&mut self.nodes[b].grad, &db);
                }
                Op::Transpose { a } => {
                    let a = *a;
                    let (r, c) = (self.nodes[i].shape[0], self.nodes[i].shape[1]);
                    let mut da = vec![0.0; r * c];
                    for p in 0..r {
                        for q in 0..c {
                            da[q * r + p] = grad[p * c + q];
                        }
                    }
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Affine { x, w, b } => {
                    let (x, w, b) = (*x, *w, *b);
                    let t = self.nodes[x].shape[0];
                    let d_in = self.nodes[x].shape[1];
                    let d_out = self.nodes[w].shape[1];
                    // dX = dY . W^T
                    let mut wt = vec![0.0; d_in * d_out];
                    for p in 0..d_in {
                        for q in 0..d_out {
                            wt[q * d_in + p] = self.nodes[w].data[p * d_out + q];
                        }
                    }
                    let dx = matmul_raw(&grad, &wt, t, d_out, d_in);
                    // dW = X^T . dY
                    let mut xt = vec![0.0; t * d_in];
                    for p in 0..t {
                        for q in 0..d_in {
                            xt[q * t + p] = self.nodes[x].data[p * d_in + q];
                        }
                    }
                    let dw = matmul_raw(&xt, &grad, d_in, t, d_out);
                    // db = column sums of dY
                    let mut dbias = vec![0.0; d_out];
                    for row in 0..t {
                        for col in 0..d_out {
                            dbias[col] += grad[row * d_out + col];
                        }
                    }
                    accumulate(&mut self.nodes[x].grad, &dx);
                    accumulate(&mut self.nodes[w].grad, &dw);
                    accumulate(&mut self.nodes[b].grad, &dbias);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut self.nodes[a].grad, &grad);
                    accumulate(&mut self.nodes[b].grad, &grad);
                }
                Op::Scale { a, factor } => {
                    let (a, factor) = (*a, *factor);
                    let da: Vec<f64> = grad.iter().map(|g| g * factor).collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::MaskedSoftmax { a, mask } => {
                    let a = *a;
                    let r = mask.rows();
                    let c = mask.cols();
                    let out = &self.nodes[i].data;
                    let mut da = vec![0.0; r * c];
                    for row in 0..r {
                        let mut dot = 0.0;
                        for col in 0..c {
                            if mask.get(row, col) {
                                dot += grad[row * c + col] * out[row * c + col];
                            }
                        }
                        for col in 0..c {
                            if mask.get(row, col) {
                                da[row * c + col] =
                                    out[row * c + col] * (grad[row * c + col] - dot);
                            }
                        }
                    }
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let (x, gain, bias, eps) = (*x, *gain, *bias, *eps);
                    let t = self.nodes[x].shape[0];
                    let d = self.nodes[x].shape[1];
                    let mut dx = vec![0.0; t * d];
                    let mut dgain = vec![0.0; d];
                    let mut dbias = vec![0.0; d];
                    for row in 0..t {
                        let xs = &self.nodes[x].data[row * d..(row + 1) * d];
                        let gs = &grad[row * d..(row + 1) * d];
                        let mean = xs.iter().sum::<f64>() / d as f64;
                        let var =
                            xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                        let inv_std = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = xs.iter().map(|v| (v - mean) * inv_std).collect();
                        let mut dxhat = vec![0.0; d];
                        for col in 0..d {
                            dgain[col] += gs[col] * xhat[col];
                            dbias[col] += gs[col];
                            dxhat[col] = gs[col] * self.nodes[gain].data[col];
                        }
                        let sum_dxhat: f64 = dxhat.iter().sum();
                        let sum_dxhat_xhat: f64 =
                            dxhat.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum();
                        let df = d as f64;
                        for col in 0..d {
                            dx[row * d + col] = inv_std / df
                                * (df * dxhat[col] - sum_dxhat - xhat[col] * sum_dxhat_xhat);
                        }
                    }
                    accumulate(&mut self.nodes[x].grad, &dx);
                    accumulate(&mut self.nodes[gain].grad, &dgain);
                    accumulate(&mut self.nodes[bias].grad, &dbias);
                }
                Op::Relu { a } => {
                    let a = *a;
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(self.nodes[a].data.iter())
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Sigmoid { a } => {
                    let a = *a;
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(self.nodes[i].data.iter())
                        .map(|(g, &s)| g * s * (1.0 - s))
                        .collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Dropout { a, keep } => {
                    let a = *a;
                    let da: Vec<f64> = grad.iter().zip(keep.iter()).map(|(g, k)| g * k).collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Sum { a } => {
                    let a = *a;
                    let g = grad[0];
                    let da = vec![g; self.nodes[a].data.len()];
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Reshape { a } => {
                    let a = *a;
                    accumulate(&mut self.nodes[a].grad, &grad);
                }
                Op::MseLoss { pred, target } => {
                    let (pred, target) = (*pred, *target);
                    let n = self.nodes[pred].data.len() as f64;
                    let g = grad[0];
                    let dpred: Vec<f64> = self.nodes[pred]
                        .data
                        .iter()
                        .zip(self.nodes[target].data.iter())
                        .map(|(p, t)| g * 2.0 * (p - t) / n)
                        .collect();
                    let dtarget: Vec<f64> = dpred.iter().map(|v| -v).collect();
                    accumulate(&mut self.nodes[pred].grad, &dpred);
                    accumulate(&mut self.nodes[target].grad, &dtarget);
                }
            }
            self.nodes[i].grad = grad;
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    let v = if x >= 0.0 {
        let z = (-x).exp();
        1.0 / (1.0 + z)
    } else {
        let z = x.exp();
        z / (1.0 + z)
    };
    // Deep saturation rounds to exactly 0.0 or 1.0 in f64; keep the output
    // strictly inside (0, 1).
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            for j in 0..n {
                out[i * n + j] += av * b[p * n + j];
            }
        }
    }
    out
}

fn accumulate(target: &mut [f64], src: &[f64]) {
    for (t, s) in target.iter_mut().zip(src.iter()) {
        *t += s;
    }
}
