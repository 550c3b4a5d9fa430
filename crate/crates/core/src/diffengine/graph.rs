//! Tape-based reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Graph`] is rebuilt for every forward pass. Each op appends one node
//! holding its value; [`Graph::backward`] walks the tape from the loss towards
//! the leaves, so every node is visited after all of its consumers.

use super::tensor::{gemm, Tensor};
use super::EngineError;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Option<Var>,
        bias: Option<Var>,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Silu(Var),
    Gelu(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    GatherRows {
        x: Var,
        index: Vec<usize>,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    trainable_leaf: bool,
}

/// Recorded computation. Nodes are stored in creation order, which is a
/// topological order of the data flow.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every trainable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; exactly zero when `v` does
    /// not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("grad shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Vec<f64> {
        let n: usize = self.shapes[v.0].iter().product();
        self.grads[v.0].take().unwrap_or_else(|| vec![0.0; n])
    }
}

fn gelu_parts(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044_715;
    let u = C * (x + A * x * x * x);
    let th = u.tanh();
    let y = 0.5 * x * (1.0 + th);
    let du = C * (1.0 + 3.0 * A * x * x);
    let dy = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
    (y, dy)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contribution: Vec<f64>) {
    match slot {
        Some(g) => {
            for (a, b) in g.iter_mut().zip(contribution) {
                *a += b;
            }
        }
        None => *slot = Some(contribution),
    }
}

fn accumulate_with(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let g = slot.get_or_insert_with(|| vec![0.0; len]);
    f(g);
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf treated as a constant: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: trainable,
            trainable_leaf: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            trainable_leaf: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(EngineError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(EngineError::ShapeMismatch {
                op: "matmul_t",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            true,
            &mut out,
            false,
        );
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::MatMulT(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let t = Tensor::matrix(c, r, out).expect("transpose shape");
        self.push(t, Op::Transpose(a), &[a])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), EngineError> {
        if self.shape(a) != self.shape(b) {
            return Err(EngineError::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let tb = self.value(b);
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.same_shape("add", a, b)?;
        let t = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, EngineError> {
        let (_, c) = self.dims(a);
        if self.value(row).len() != c {
            return Err(EngineError::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(row).to_vec(),
            });
        }
        let mut t = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for chunk in t.data_mut().chunks_mut(c) {
            for (x, b) in chunk.iter_mut().zip(&r) {
                *x += b;
            }
        }
        Ok(self.push(t, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x * s);
        self.push(t, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x + s);
        self.push(t, Op::AddScalar(a), &[a])
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, EngineError> {
        let src = self.value(a);
        if !src.is_finite() {
            return Err(EngineError::NonFinite("softmax_rows"));
        }
        let mut t = src.clone();
        let c = t.cols();
        for row in t.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
        Ok(self.push(t, Op::SoftmaxRows(a), &[a]))
    }

    /// Per-row normalisation to zero mean / unit variance followed by the
    /// optional affine `gain`, `bias` (each of length `cols`).
    pub fn layer_norm(
        &mut self,
        x: Var,
        gain: Option<Var>,
        bias: Option<Var>,
        eps: f64,
    ) -> Result<Var, EngineError> {
        if !(eps > 0.0) {
            return Err(EngineError::InvalidArgument("layer_norm eps must be positive"));
        }
        let (r, c) = self.dims(x);
        for p in gain.iter().chain(bias.iter()) {
            if self.value(*p).len() != c {
                return Err(EngineError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: self.shape(x).to_vec(),
                    rhs: self.shape(*p).to_vec(),
                });
            }
        }
        let src = self.value(x).data();
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[i] = inv;
            for j in 0..c {
                xhat[i * c + j] = (row[j] - mean) * inv;
            }
        }
        let mut out = xhat.clone();
        if let Some(g) = gain {
            let g = self.value(g).data();
            for row in out.chunks_mut(c) {
                for (v, gv) in row.iter_mut().zip(g) {
                    *v *= gv;
                }
            }
        }
        if let Some(b) = bias {
            let b = self.value(b).data();
            for row in out.chunks_mut(c) {
                for (v, bv) in row.iter_mut().zip(b) {
                    *v += bv;
                }
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let mut parents = vec![x];
        parents.extend(gain);
        parents.extend(bias);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &parents,
        ))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * sigmoid(x));
        self.push(t, Op::Silu(a), &[a])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| gelu_parts(x).0);
        self.push(t, Op::Gelu(a), &[a])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, EngineError> {
        let (r, c) = self.dims(x);
        if len == 0 || start + len > c {
            return Err(EngineError::InvalidArgument("slice_cols out of range"));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        let t = Tensor::matrix(r, len, out)?;
        Ok(self.push(t, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, EngineError> {
        let first = *parts.first().ok_or(EngineError::InvalidArgument("concat of nothing"))?;
        let r = self.dims(first).0;
        if parts.iter().any(|&p| self.dims(p).0 != r) {
            return Err(EngineError::InvalidArgument("concat_cols row mismatch"));
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let c = self.dims(p).1;
                out.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
            }
        }
        let t = Tensor::matrix(r, total, out)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, EngineError> {
        let (r, c) = self.dims(x);
        if len == 0 || start + len > r {
            return Err(EngineError::InvalidArgument("slice_rows out of range"));
        }
        let out = self.value(x).data()[start * c..(start + len) * c].to_vec();
        let t = Tensor::matrix(len, c, out)?;
        Ok(self.push(t, Op::SliceRows { x, start }, &[x]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, EngineError> {
        let first = *parts.first().ok_or(EngineError::InvalidArgument("concat of nothing"))?;
        let c = self.dims(first).1;
        if parts.iter().any(|&p| self.dims(p).1 != c) {
            return Err(EngineError::InvalidArgument("concat_rows column mismatch"));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::matrix(out.len() / c, c, out)?;
        Ok(self.push(t, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Row `i` of the result is row `index[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var, EngineError> {
        let (r, c) = self.dims(x);
        if index.is_empty() || index.iter().any(|&i| i >= r) {
            return Err(EngineError::InvalidArgument("gather_rows index out of range"));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index {
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let t = Tensor::matrix(index.len(), c, out)?;
        Ok(self.push(
            t,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            &[x],
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, EngineError> {
        if self.value(loss).len() != 1 {
            return Err(EngineError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            if node.trainable_leaf {
                grads[i] = Some(gy);
                continue;
            }
            self.propagate(i, &gy, &mut grads);
        }
        // Only trainable leaves keep their gradient.
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.trainable_leaf {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, i: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.dims(a);
                let n = self.dims(b).1;
                if self.wants(a) {
                    let bv = self.value(b).data();
                    accumulate_with(&mut grads[a.0], m * k, |g| {
                        gemm(m, n, k, gy, false, bv, true, g, true)
                    });
                }
                if self.wants(b) {
                    let av = self.value(a).data();
                    accumulate_with(&mut grads[b.0], k * n, |g| {
                        gemm(k, m, n, av, true, gy, false, g, true)
                    });
                }
            }
            &Op::MatMulT(a, b) => {
                // C = A Bᵀ, A: m×k, B: n×k. dA = dC B, dB = dCᵀ A.
                let (m, k) = self.dims(a);
                let n = self.dims(b).0;
                if self.wants(a) {
                    let bv = self.value(b).data();
                    accumulate_with(&mut grads[a.0], m * k, |g| {
                        gemm(m, n, k, gy, false, bv, false, g, true)
                    });
                }
                if self.wants(b) {
                    let av = self.value(a).data();
                    accumulate_with(&mut grads[b.0], n * k, |g| {
                        gemm(n, m, k, gy, true, av, false, g, true)
                    });
                }
            }
            &Op::Transpose(a) => {
                if self.wants(a) {
                    let (r, c) = self.dims(a);
                    let mut g = vec![0.0; r * c];
                    for x in 0..r {
                        for y in 0..c {
                            g[x * c + y] = gy[y * r + x];
                        }
                    }
                    accumulate(&mut grads[a.0], g);
                }
            }
            &Op::Add(a, b) => {
                if self.wants(a) {
                    accumulate(&mut grads[a.0], gy.to_vec());
                }
                if self.wants(b) {
                    accumulate(&mut grads[b.0], gy.to_vec());
                }
            }
            &Op::Sub(a, b) => {
                if self.wants(a) {
                    accumulate(&mut grads[a.0], gy.to_vec());
                }
                if self.wants(b) {
                    accumulate(&mut grads[b.0], gy.iter().map(|v| -v).collect());
                }
            }
            &Op::Mul(a, b) => {
                if self.wants(a) {
                    let bv = self.value(b).data();
                    accumulate(&mut grads[a.0], gy.iter().zip(bv).map(|(g, y)| g * y).collect());
                }
                if self.wants(b) {
                    let av = self.value(a).data();
                    accumulate(&mut grads[b.0], gy.iter().zip(av).map(|(g, x)| g * x).collect());
                }
            }
            &Op::AddRow(a, row) => {
                if self.wants(a) {
                    accumulate(&mut grads[a.0], gy.to_vec());
                }
                if self.wants(row) {
                    let c = self.dims(a).1;
                    accumulate_with(&mut grads[row.0], c, |g| {
                        for chunk in gy.chunks(c) {
                            for (s, v) in g.iter_mut().zip(chunk) {
                                *s += v;
                            }
                        }
                    });
                }
            }
            &Op::Scale(a, s) => {
                if self.wants(a) {
                    accumulate(&mut grads[a.0], gy.iter().map(|g| g * s).collect());
                }
            }
            &Op::AddScalar(a) => {
                if self.wants(a) {
                    accumulate(&mut grads[a.0], gy.to_vec());
                }
            }
            &Op::SoftmaxRows(a) => {
                if self.wants(a) {
                    let y = node.value.data();
                    let c = node.value.cols();
                    let mut g = vec![0.0; y.len()];
                    for ((gr, yr), dr) in g.chunks_mut(c).zip(y.chunks(c)).zip(gy.chunks(c)) {
                        let dot: f64 = yr.iter().zip(dr).map(|(p, d)| p * d).sum();
                        for j in 0..c {
                            gr[j] = yr[j] * (dr[j] - dot);
                        }
                    }
                    accumulate(&mut grads[a.0], g);
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let (r, c) = self.dims(*x);
                if let Some(b) = bias {
                    if self.wants(*b) {
                        accumulate_with(&mut grads[b.0], c, |g| {
                            for chunk in gy.chunks(c) {
                                for (s, v) in g.iter_mut().zip(chunk) {
                                    *s += v;
                                }
                            }
                        });
                    }
                }
                if let Some(gn) = gain {
                    if self.wants(*gn) {
                        accumulate_with(&mut grads[gn.0], c, |g| {
                            for (dy, xh) in gy.chunks(c).zip(xhat.chunks(c)) {
                                for j in 0..c {
                                    g[j] += dy[j] * xh[j];
                                }
                            }
                        });
                    }
                }
                if self.wants(*x) {
                    let gain_v = gain.map(|g| self.value(g).data());
                    let mut gx = vec![0.0; r * c];
                    let cf = c as f64;
                    let mut dxhat = vec![0.0; c];
                    for i in 0..r {
                        let dy = &gy[i * c..(i + 1) * c];
                        let xh = &xhat[i * c..(i + 1) * c];
                        for j in 0..c {
                            dxhat[j] = dy[j] * gain_v.map_or(1.0, |g| g[j]);
                        }
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(xh).map(|(d, h)| d * h).sum();
                        let inv = inv_std[i];
                        for j in 0..c {
                            gx[i * c + j] = inv / cf * (cf * dxhat[j] - s1 - xh[j] * s2);
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                }
            }
            &Op::Silu(a) => {
                if self.wants(a) {
                    let xv = self.value(a).data();
                    let g = gy
                        .iter()
                        .zip(xv)
                        .map(|(d, &x)| {
                            let s = sigmoid(x);
                            d * s * (1.0 + x * (1.0 - s))
                        })
                        .collect();
                    accumulate(&mut grads[a.0], g);
                }
            }
            &Op::Gelu(a) => {
                if self.wants(a) {
                    let xv = self.value(a).data();
                    let g = gy.iter().zip(xv).map(|(d, &x)| d * gelu_parts(x).1).collect();
                    accumulate(&mut grads[a.0], g);
                }
            }
            &Op::SliceCols { x, start } => {
                if self.wants(x) {
                    let (r, c) = self.dims(x);
                    let len = node.value.cols();
                    accumulate_with(&mut grads[x.0], r * c, |g| {
                        for i in 0..r {
                            for j in 0..len {
                                g[i * c + start + j] += gy[i * len + j];
                            }
                        }
                    });
                }
            }
            Op::ConcatCols(parts) => {
                let r = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.dims(p).1;
                    if self.wants(p) {
                        accumulate_with(&mut grads[p.0], r * c, |g| {
                            for i in 0..r {
                                for j in 0..c {
                                    g[i * c + j] += gy[i * total + offset + j];
                                }
                            }
                        });
                    }
                    offset += c;
                }
            }
            &Op::SliceRows { x, start } => {
                if self.wants(x) {
                    let (r, c) = self.dims(x);
                    accumulate_with(&mut grads[x.0], r * c, |g| {
                        for (s, v) in g[start * c..].iter_mut().zip(gy) {
                            *s += v;
                        }
                    });
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.wants(p) {
                        accumulate(&mut grads[p.0], gy[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            Op::GatherRows { x, index } => {
                if self.wants(*x) {
                    let (r, c) = self.dims(*x);
                    accumulate_with(&mut grads[x.0], r * c, |g| {
                        for (k, &src) in index.iter().enumerate() {
                            for j in 0..c {
                                g[src * c + j] += gy[k * c + j];
                            }
                        }
                    });
                }
            }
            &Op::Sum(a) => {
                if self.wants(a) {
                    let n = self.value(a).len();
                    accumulate(&mut grads[a.0], vec![gy[0]; n]);
                }
            }
        }
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
