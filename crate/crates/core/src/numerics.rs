//! Dense-tensor arithmetic with reverse-mode differentiation.
//!
//! The tape is define-by-run: every operation appends a node holding the
//! forward value and whatever the backward rule needs. A fresh tape is built
//! per forward pass, which keeps recurrent graphs of variable length and
//! variable lane count trivially correct. All math is f64.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Input magnitude clamp applied before exponentiation in `exp` and
/// `sigmoid`, keeping both total on finite inputs.
pub const EXP_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: lhs {lhs:?}, rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("data length {got} does not match shape {shape:?} (expects {expected})")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },
}

pub type NumericsResult<T> = Result<T, NumericsError>;

// ── Tensor ───────────────────────────────────────────────────────────

/// Dense real-valued array, row-major, double precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> NumericsResult<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(NumericsError::DataLength {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> NumericsResult<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

// ── Raw kernels ──────────────────────────────────────────────────────
//
// The hot loops of the whole artifact. Row-major throughout; the ikj
// ordering keeps b and out rows sequential.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in (&mut ca).zip(&mut cb) {
        s0 += x[0] * y[0];
        s1 += x[1] * y[1];
        s2 += x[2] * y[2];
        s3 += x[3] * y[3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

fn axpy(acc: &mut [f64], c: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += c * v;
    }
}

/// out += A[m,k] * B[k,n]
fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    if n == 1 {
        for i in 0..m {
            out[i] += dot(&a[i * k..(i + 1) * k], b);
        }
        return;
    }
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(row, a[i * k + p], &b[p * n..(p + 1) * n]);
        }
    }
}

/// out += A[m,k] * B[n,k]^T  (C[i,j] = dot of row i of A with row j of B)
fn matmul_nt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] += dot(ar, &b[j * k..(j + 1) * k]);
        }
    }
}

/// out += A[m,k]^T * B[m,n]  (accumulated as a sum of row outer products)
fn matmul_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let br = &b[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(&mut out[p * n..(p + 1) * n], a[i * k + p], br);
        }
    }
}

// ── Activations ──────────────────────────────────────────────────────

/// Pointwise nonlinearities supported by the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Exp,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let c = x.clamp(-EXP_CLAMP, EXP_CLAMP);
                1.0 / (1.0 + (-c).exp())
            }
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Exp => x.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
        }
    }

    /// Derivative given the input x and the already-computed output y.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                if x.abs() > EXP_CLAMP {
                    0.0
                } else {
                    y * (1.0 - y)
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                // At exactly zero: the averaged subgradient, which is what a
                // central difference straddling the kink measures. Zero
                // pre-activations occur systematically with zero-initialized
                // biases, so the choice matters for gradient checks.
                if x > 0.0 {
                    1.0
                } else if x == 0.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Activation::Exp => {
                if x.abs() > EXP_CLAMP {
                    0.0
                } else {
                    y
                }
            }
        }
    }
}

// ── Tape ─────────────────────────────────────────────────────────────

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: ValueId, b: ValueId },
    Add { a: ValueId, b: ValueId },
    Sub { a: ValueId, b: ValueId },
    Mul { a: ValueId, b: ValueId },
    Div { a: ValueId, b: ValueId },
    /// scale * a + shift, elementwise with constants; only the scale matters
    /// on the way back
    Affine { a: ValueId, scale: f64 },
    Unary { a: ValueId, f: Activation },
    Log { a: ValueId },
    ClampMin { a: ValueId, min: f64 },
    Softmax { a: ValueId },
    Concat { parts: Vec<ValueId> },
    Slice { a: ValueId, start: usize },
    Sum { a: ValueId },
    /// vector scaled by a one-element tensor
    ScaleByScalar { v: ValueId, s: ValueId },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Define-by-run operation recorder. Appending preserves topological order,
/// so the backward sweep is a single reverse pass that visits each node once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ValueId) -> &Tensor {
        &self.grads[id.0]
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a recorded node.
    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> ValueId {
        self.nodes.push(Node { value, op });
        ValueId(self.nodes.len() - 1)
    }

    /// Record an input value. Leaves receive gradients but do not propagate.
    pub fn leaf(&mut self, t: Tensor) -> ValueId {
        self.push(t, Op::Leaf)
    }

    pub fn leaf_scalar(&mut self, v: f64) -> ValueId {
        self.leaf(Tensor::scalar(v))
    }

    pub fn leaf_vector(&mut self, v: Vec<f64>) -> ValueId {
        self.leaf(Tensor::vector(v))
    }

    /// Matrix product. Accepts `[m,k] x [k,n] -> [m,n]` and the matrix-vector
    /// form `[m,k] x [k] -> [m]`.
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> NumericsResult<ValueId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let mismatch = || NumericsError::ShapeMismatch {
            op: "matmul",
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        };
        if sa.len() != 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[0], sa[1]);
        let (n, out_shape) = match sb.len() {
            1 => {
                if sb[0] != k {
                    return Err(mismatch());
                }
                (1, vec![m])
            }
            2 => {
                if sb[0] != k {
                    return Err(mismatch());
                }
                (sb[1], vec![m, sb[1]])
            }
            _ => return Err(mismatch()),
        };
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        Ok(self.push(
            Tensor {
                shape: out_shape,
                data: out,
            },
            Op::Matmul { a, b },
        ))
    }

    fn zip_elementwise(
        &mut self,
        op_name: &'static str,
        a: ValueId,
        b: ValueId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> NumericsResult<ValueId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NumericsError::ShapeMismatch {
                op: op_name,
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor { shape, data }, op))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> NumericsResult<ValueId> {
        self.zip_elementwise("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> NumericsResult<ValueId> {
        self.zip_elementwise("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> NumericsResult<ValueId> {
        self.zip_elementwise("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn div(&mut self, a: ValueId, b: ValueId) -> NumericsResult<ValueId> {
        self.zip_elementwise("div", a, b, |x, y| x / y, Op::Div { a, b })
    }

    /// scale * a + shift, elementwise.
    pub fn affine(&mut self, a: ValueId, scale: f64, shift: f64) -> ValueId {
        let data: Vec<f64> = self.value(a).data().iter().map(|&x| scale * x + shift).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor { shape, data }, Op::Affine { a, scale })
    }

    /// Pointwise nonlinearity. `exp` and `sigmoid` clamp their input to
    /// +-[`EXP_CLAMP`] before exponentiation.
    pub fn elementwise(&mut self, a: ValueId, f: Activation) -> ValueId {
        let data: Vec<f64> = self.value(a).data().iter().map(|&x| f.apply(x)).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor { shape, data }, Op::Unary { a, f })
    }

    pub fn sigmoid(&mut self, a: ValueId) -> ValueId {
        self.elementwise(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: ValueId) -> ValueId {
        self.elementwise(a, Activation::Tanh)
    }

    pub fn relu(&mut self, a: ValueId) -> ValueId {
        self.elementwise(a, Activation::Relu)
    }

    pub fn exp(&mut self, a: ValueId) -> ValueId {
        self.elementwise(a, Activation::Exp)
    }

    /// Natural log; every element must be strictly positive.
    pub fn log(&mut self, a: ValueId) -> NumericsResult<ValueId> {
        if let Some(&bad) = self.value(a).data().iter().find(|v| **v <= 0.0) {
            return Err(NumericsError::Domain {
                op: "log",
                msg: format!("non-positive input {bad}"),
            });
        }
        let data: Vec<f64> = self.value(a).data().iter().map(|&x| x.ln()).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Log { a }))
    }

    pub fn clamp_min(&mut self, a: ValueId, min: f64) -> ValueId {
        let data: Vec<f64> = self.value(a).data().iter().map(|&x| x.max(min)).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor { shape, data }, Op::ClampMin { a, min })
    }

    /// Numerically stable softmax over a vector of at least one score.
    pub fn softmax(&mut self, a: ValueId) -> NumericsResult<ValueId> {
        let x = self.value(a).data();
        if x.is_empty() {
            return Err(NumericsError::Domain {
                op: "softmax",
                msg: "empty score vector".to_string(),
            });
        }
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let data: Vec<f64> = exps.iter().map(|&e| e / total).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Softmax { a }))
    }

    /// Concatenate one-dimensional values in order.
    pub fn concat(&mut self, parts: &[ValueId]) -> NumericsResult<ValueId> {
        if parts.is_empty() {
            return Err(NumericsError::Domain {
                op: "concat",
                msg: "no parts".to_string(),
            });
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let shape = vec![data.len()];
        Ok(self.push(
            Tensor { shape, data },
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Contiguous slice of a one-dimensional value.
    pub fn slice(&mut self, a: ValueId, start: usize, len: usize) -> NumericsResult<ValueId> {
        let n = self.value(a).numel();
        if start + len > n {
            return Err(NumericsError::Domain {
                op: "slice",
                msg: format!("range {start}..{} out of bounds for length {n}", start + len),
            });
        }
        let data = self.value(a).data()[start..start + len].to_vec();
        Ok(self.push(
            Tensor {
                shape: vec![len],
                data,
            },
            Op::Slice { a, start },
        ))
    }

    /// Sum of all elements, yielding a scalar.
    pub fn sum(&mut self, a: ValueId) -> ValueId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { a })
    }

    /// Vector scaled by a one-element tensor.
    pub fn scale_by_scalar(&mut self, v: ValueId, s: ValueId) -> NumericsResult<ValueId> {
        if self.value(s).numel() != 1 {
            return Err(NumericsError::ShapeMismatch {
                op: "scale_by_scalar",
                lhs: self.value(v).shape().to_vec(),
                rhs: self.value(s).shape().to_vec(),
            });
        }
        let c = self.value(s).item();
        let data: Vec<f64> = self.value(v).data().iter().map(|&x| c * x).collect();
        let shape = self.value(v).shape().to_vec();
        Ok(self.push(Tensor { shape, data }, Op::ScaleByScalar { v, s }))
    }

    /// Reverse sweep from a scalar root. Returns per-node gradients with
    /// additive accumulation across fan-out.
    pub fn backward(&mut self, loss: ValueId) -> NumericsResult<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(NumericsError::Domain {
                op: "backward",
                msg: format!(
                    "root must be scalar, got shape {:?}",
                    self.value(loss).shape()
                ),
            });
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[loss.0].data[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            if grads[i].data.iter().all(|&g| g == 0.0) {
                continue;
            }
            // Take the node's gradient out so we can mutate upstream entries.
            let g = std::mem::replace(&mut grads[i], Tensor::zeros(&[0]));
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let sa = self.nodes[a.0].value.shape();
                    let (m, k) = (sa[0], sa[1]);
                    let n = self.nodes[i].value.numel() / m;
                    let bd = self.nodes[b.0].value.data();
                    let ad = self.nodes[a.0].value.data();
                    if n == 1 {
                        // Matrix-vector: dA is the outer product g (x) x and
                        // dB is A^T g, both as row-wise axpy sweeps.
                        let (a, b) = (*a, *b);
                        for r in 0..m {
                            let gv = g.data[r];
                            if gv != 0.0 {
                                axpy(&mut grads[a.0].data[r * k..(r + 1) * k], gv, bd);
                            }
                        }
                        let ad = self.nodes[a.0].value.data();
                        for r in 0..m {
                            let gv = g.data[r];
                            if gv != 0.0 {
                                axpy(&mut grads[b.0].data, gv, &ad[r * k..(r + 1) * k]);
                            }
                        }
                    } else {
                        matmul_nt_acc(&g.data, bd, m, n, k, &mut grads[a.0].data);
                        matmul_tn_acc(ad, &g.data, m, k, n, &mut grads[b.0].data);
                    }
                }
                Op::Add { a, b } => {
                    axpy(&mut grads[a.0].data, 1.0, &g.data);
                    axpy(&mut grads[b.0].data, 1.0, &g.data);
                }
                Op::Sub { a, b } => {
                    axpy(&mut grads[a.0].data, 1.0, &g.data);
                    axpy(&mut grads[b.0].data, -1.0, &g.data);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    for j in 0..g.data.len() {
                        let (av, bv) = (self.nodes[a.0].value.data[j], self.nodes[b.0].value.data[j]);
                        grads[a.0].data[j] += g.data[j] * bv;
                        grads[b.0].data[j] += g.data[j] * av;
                    }
                }
                Op::Div { a, b } => {
                    let (a, b) = (*a, *b);
                    for j in 0..g.data.len() {
                        let (av, bv) = (self.nodes[a.0].value.data[j], self.nodes[b.0].value.data[j]);
                        grads[a.0].data[j] += g.data[j] / bv;
                        grads[b.0].data[j] -= g.data[j] * av / (bv * bv);
                    }
                }
                Op::Affine { a, scale } => {
                    axpy(&mut grads[a.0].data, *scale, &g.data);
                }
                Op::Unary { a, f } => {
                    let (a, f) = (*a, *f);
                    for j in 0..g.data.len() {
                        let x = self.nodes[a.0].value.data[j];
                        let y = self.nodes[i].value.data[j];
                        grads[a.0].data[j] += g.data[j] * f.derivative(x, y);
                    }
                }
                Op::Log { a } => {
                    let a = *a;
                    for j in 0..g.data.len() {
                        grads[a.0].data[j] += g.data[j] / self.nodes[a.0].value.data[j];
                    }
                }
                Op::ClampMin { a, min } => {
                    let (a, min) = (*a, *min);
                    for j in 0..g.data.len() {
                        if self.nodes[a.0].value.data[j] > min {
                            grads[a.0].data[j] += g.data[j];
                        }
                    }
                }
                Op::Softmax { a } => {
                    let a = *a;
                    let y = &self.nodes[i].value.data;
                    let weighted: f64 = g.data.iter().zip(y.iter()).map(|(gi, yi)| gi * yi).sum();
                    for j in 0..g.data.len() {
                        grads[a.0].data[j] += y[j] * (g.data[j] - weighted);
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.numel();
                        axpy(&mut grads[p.0].data, 1.0, &g.data[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Slice { a, start } => {
                    let (a, start) = (*a, *start);
                    let len = g.data.len();
                    axpy(&mut grads[a.0].data[start..start + len], 1.0, &g.data);
                }
                Op::Sum { a } => {
                    let a = *a;
                    let gv = g.data[0];
                    for d in grads[a.0].data.iter_mut() {
                        *d += gv;
                    }
                }
                Op::ScaleByScalar { v, s } => {
                    let (v, s) = (*v, *s);
                    let c = self.nodes[s.0].value.data[0];
                    let mut ds = 0.0;
                    for j in 0..g.data.len() {
                        grads[v.0].data[j] += g.data[j] * c;
                        ds += g.data[j] * self.nodes[v.0].value.data[j];
                    }
                    grads[s.0].data[0] += ds;
                }
            }
            grads[i] = g;
        }
        Ok(Gradients { grads })
    }
}

// ── Finite-difference oracle ─────────────────────────────────────────

/// Compares the tape's analytic gradients against central finite differences.
///
/// `f` rebuilds the scalar loss from scratch on the given tape; the central
/// differences only ever use its forward values, so the two routes stay
/// independent. Each parameter tensor is scored as
/// `|analytic - central| / max(|analytic|, |central|, 1e-8)` where `|.|` is
/// the Euclidean norm over the tensor, and the maximum over tensors comes
/// back. The norm is taken per tensor because single elements whose true
/// gradient sits near the loss's own f64 rounding floor (about
/// `ulp(loss) / 2h`) cannot be resolved by any central difference.
pub fn finite_diff_check<F>(params: &[Tensor], h: f64, mut f: F) -> NumericsResult<f64>
where
    F: FnMut(&mut Tape, &[ValueId]) -> NumericsResult<ValueId>,
{
    assert!(h > 0.0, "finite_diff_check requires h > 0");
    let eval = |f: &mut F, params: &[Tensor]| -> NumericsResult<f64> {
        let mut tape = Tape::new();
        let ids: Vec<ValueId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = f(&mut tape, &ids)?;
        Ok(tape.value(loss).item())
    };

    // Analytic route.
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel = 0.0_f64;
    for (pi, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).data().to_vec();
        let mut diff_sq = 0.0;
        let mut a_sq = 0.0;
        let mut c_sq = 0.0;
        for j in 0..work[pi].numel() {
            let orig = work[pi].data[j];
            work[pi].data[j] = orig + h;
            let fp = eval(&mut f, &work)?;
            work[pi].data[j] = orig - h;
            let fm = eval(&mut f, &work)?;
            work[pi].data[j] = orig;
            let central = (fp - fm) / (2.0 * h);
            let a = analytic[j];
            diff_sq += (a - central) * (a - central);
            a_sq += a * a;
            c_sq += central * central;
        }
        let rel = diff_sq.sqrt() / a_sq.sqrt().max(c_sq.sqrt()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}
