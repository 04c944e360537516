use super::kernels::{self, gemm};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable primitives understood by the tape.
///
/// Elementwise binary ops require identical shapes; the only broadcast is
/// [`Primitive::BroadcastAddBias`], which adds a `[n]` bias to every row of a
/// `[.., n]` input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Add,
    Subtract,
    Multiply,
    MatMul,
    ConcatLastAxis,
    Sum,
    Mean,
    Negate,
    Exp,
    Log,
    Sigmoid,
    Tanh,
    LeakyRelu(f64),
    Square,
    BroadcastAddBias,
    Softplus,
    Clamp { lo: f64, hi: f64 },
    SliceLastAxis { start: usize, end: usize },
    Scale(f64),
    LogSumExpLastAxis,
}

impl Primitive {
    pub fn arity(self) -> usize {
        use Primitive::*;
        match self {
            Add | Subtract | Multiply | MatMul | ConcatLastAxis | BroadcastAddBias => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        use Primitive::*;
        match self {
            Add => "add",
            Subtract => "subtract",
            Multiply => "multiply",
            MatMul => "matmul",
            ConcatLastAxis => "concat_last_axis",
            Sum => "sum",
            Mean => "mean",
            Negate => "negate",
            Exp => "exponential",
            Log => "logarithm",
            Sigmoid => "sigmoid",
            Tanh => "tanh",
            LeakyRelu(_) => "leaky_relu",
            Square => "square",
            BroadcastAddBias => "broadcast_add_bias",
            Softplus => "softplus",
            Clamp { .. } => "clamp",
            SliceLastAxis { .. } => "slice_last_axis",
            Scale(_) => "scale",
            LogSumExpLastAxis => "logsumexp_last_axis",
        }
    }
}

struct Node {
    op: Option<Primitive>,
    inputs: [usize; 2],
    value: Tensor,
    requires_grad: bool,
}

/// Define-by-run record of tensor operations.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it and a single reverse sweep visits each node once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Records a trainable leaf; [`Tape::backward`] reports its gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(None, [0, 0], value, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(None, [0, 0], value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Option<Primitive>, inputs: [usize; 2], value: Tensor, rg: bool) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad: rg,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, op: Primitive, a: Var, value: Tensor) -> Var {
        let rg = self.nodes[a.0].requires_grad;
        self.push(Some(op), [a.0, a.0], value, rg)
    }

    fn binary(&mut self, op: Primitive, a: Var, b: Var, value: Tensor) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(Some(op), [a.0, b.0], value, rg)
    }

    /// Applies `op` to `inputs`, dispatching on the primitive.
    pub fn apply(&mut self, op: Primitive, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != op.arity() {
            return Err(Error::contract(format!(
                "`{}` takes {} inputs, got {}",
                op.name(),
                op.arity(),
                inputs.len()
            )));
        }
        let a = inputs[0];
        use Primitive::*;
        match op {
            Add => self.add(a, inputs[1]),
            Subtract => self.sub(a, inputs[1]),
            Multiply => self.mul(a, inputs[1]),
            MatMul => self.matmul(a, inputs[1]),
            ConcatLastAxis => self.concat_last_axis(a, inputs[1]),
            BroadcastAddBias => self.add_bias(a, inputs[1]),
            Sum => Ok(self.sum(a)),
            Mean => Ok(self.mean(a)),
            Negate => Ok(self.neg(a)),
            Exp => Ok(self.exp(a)),
            Log => self.log(a),
            Sigmoid => Ok(self.sigmoid(a)),
            Tanh => Ok(self.tanh(a)),
            LeakyRelu(slope) => Ok(self.leaky_relu(a, slope)),
            Square => Ok(self.square(a)),
            Softplus => Ok(self.softplus(a)),
            Clamp { lo, hi } => Ok(self.clamp(a, lo, hi)),
            SliceLastAxis { start, end } => self.slice_last_axis(a, start, end),
            Scale(c) => Ok(self.scale(a, c)),
            LogSumExpLastAxis => Ok(self.logsumexp_last_axis(a)),
        }
    }

    fn same_shape(&self, op: Primitive, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op.name(), &[sa, sb]));
        }
        Ok(())
    }

    fn zip(&mut self, op: Primitive, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.binary(op, a, b, value))
    }

    fn map(&mut self, op: Primitive, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        self.unary(op, a, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Primitive::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Primitive::Subtract, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Primitive::Multiply, a, b, |x, y| x * y)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.rows() {
            return Err(Error::shape("matmul", &[ta.shape(), tb.shape()]));
        }
        let value = kernels::matmul(ta, tb);
        Ok(self.binary(Primitive::MatMul, a, b, value))
    }

    pub fn concat_last_axis(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::shape("concat_last_axis", &[sa, sb]));
        }
        let (ca, cb) = (ta.cols(), tb.cols());
        let outer = ta.len() / ca;
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        for i in 0..outer {
            data.extend_from_slice(&ta.data()[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&tb.data()[i * cb..(i + 1) * cb]);
        }
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let value = Tensor::new(shape, data)?;
        Ok(self.binary(Primitive::ConcatLastAxis, a, b, value))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.shape().len() != 1 || ta.cols() != tb.len() || ta.shape().len() < 2 {
            return Err(Error::shape("broadcast_add_bias", &[ta.shape(), tb.shape()]));
        }
        let n = tb.len();
        let mut value = ta.clone();
        for row in value.data_mut().chunks_mut(n) {
            for (v, b) in row.iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        Ok(self.binary(Primitive::BroadcastAddBias, a, bias, value))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.unary(Primitive::Sum, a, Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.unary(Primitive::Mean, a, Tensor::scalar(m))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.map(Primitive::Negate, a, |x| -x)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(Primitive::Exp, a, f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x.is_nan() || x <= 0.0) {
            return Err(Error::Domain {
                op: "logarithm",
                detail: format!("input {bad} is not strictly positive"),
            });
        }
        Ok(self.map(Primitive::Log, a, f64::ln))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(Primitive::Sigmoid, a, kernels::sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(Primitive::Tanh, a, f64::tanh)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.map(Primitive::LeakyRelu(slope), a, |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(Primitive::Square, a, |x| x * x)
    }

    /// `log(1 + exp(a))`, stable for all finite inputs.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(Primitive::Softplus, a, kernels::softplus)
    }

    /// Elementwise clamp; the gradient is zero where the input was clipped.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(Primitive::Clamp { lo, hi }, a, |x| x.clamp(lo, hi))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(Primitive::Scale(c), a, |x| c * x)
    }

    pub fn slice_last_axis(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let c = t.cols();
        if start >= end || end > c {
            return Err(Error::Shape {
                op: "slice_last_axis",
                shapes: vec![t.shape().to_vec(), vec![start, end]],
            });
        }
        let w = end - start;
        let outer = t.len() / c;
        let mut data = Vec::with_capacity(outer * w);
        for i in 0..outer {
            data.extend_from_slice(&t.data()[i * c + start..i * c + end]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = w;
        let value = Tensor::new(shape, data)?;
        Ok(self.unary(Primitive::SliceLastAxis { start, end }, a, value))
    }

    /// Row-wise log-sum-exp over the last axis, keeping it as size 1.
    pub fn logsumexp_last_axis(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let data: Vec<f64> = t.data().chunks(c).map(kernels::logsumexp).collect();
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = 1;
        let value = Tensor::new(shape, data).expect("row count preserved");
        self.unary(Primitive::LogSumExpLastAxis, a, value)
    }

    /// Reverse sweep from a scalar output.
    ///
    /// Contributions reaching a node through several paths are summed.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar output, got shape {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);
        let mut leaves = Vec::new();
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let Some(op) = node.op else {
                leaves.push((i, g));
                continue;
            };
            self.propagate(op, node, &g, &mut grads);
        }
        let mut out = Gradients {
            grads: vec![None; self.nodes.len()],
        };
        for (i, g) in leaves {
            let shape = self.nodes[i].value.shape().to_vec();
            out.grads[i] = Some(Tensor::new(shape, g)?);
        }
        Ok(out)
    }

    fn propagate(&self, op: Primitive, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let [ia, ib] = node.inputs;
        let a = &self.nodes[ia];
        let y = node.value.data();
        let x = a.value.data();
        use Primitive::*;
        match op {
            Add => {
                accumulate(grads, a, ia, |d| axpy(d, g, 1.0));
                accumulate(grads, &self.nodes[ib], ib, |d| axpy(d, g, 1.0));
            }
            Subtract => {
                accumulate(grads, a, ia, |d| axpy(d, g, 1.0));
                accumulate(grads, &self.nodes[ib], ib, |d| axpy(d, g, -1.0));
            }
            Multiply => {
                let b = &self.nodes[ib];
                let xb = b.value.data();
                accumulate(grads, a, ia, |d| {
                    for ((d, g), v) in d.iter_mut().zip(g).zip(xb) {
                        *d += g * v;
                    }
                });
                accumulate(grads, b, ib, |d| {
                    for ((d, g), v) in d.iter_mut().zip(g).zip(x) {
                        *d += g * v;
                    }
                });
            }
            MatMul => {
                let b = &self.nodes[ib];
                let (m, k, n) = (a.value.rows(), a.value.cols(), b.value.cols());
                let xb = b.value.data();
                // dA = G · Bᵀ, dB = Aᵀ · G
                accumulate(grads, a, ia, |d| gemm(m, n, k, g, false, xb, true, 1.0, d));
                accumulate(grads, b, ib, |d| gemm(k, m, n, x, true, g, false, 1.0, d));
            }
            ConcatLastAxis => {
                let b = &self.nodes[ib];
                let (ca, cb) = (a.value.cols(), b.value.cols());
                let rows = g.chunks(ca + cb);
                accumulate(grads, a, ia, |d| {
                    for (d, gr) in d.chunks_mut(ca).zip(rows.clone()) {
                        axpy(d, &gr[..ca], 1.0);
                    }
                });
                accumulate(grads, b, ib, |d| {
                    for (d, gr) in d.chunks_mut(cb).zip(rows) {
                        axpy(d, &gr[ca..], 1.0);
                    }
                });
            }
            BroadcastAddBias => {
                let b = &self.nodes[ib];
                let n = b.value.len();
                accumulate(grads, a, ia, |d| axpy(d, g, 1.0));
                accumulate(grads, b, ib, |d| {
                    for gr in g.chunks(n) {
                        axpy(d, gr, 1.0);
                    }
                });
            }
            Sum => accumulate(grads, a, ia, |d| d.iter_mut().for_each(|d| *d += g[0])),
            Mean => {
                let s = g[0] / x.len() as f64;
                accumulate(grads, a, ia, |d| d.iter_mut().for_each(|d| *d += s));
            }
            Negate => accumulate(grads, a, ia, |d| axpy(d, g, -1.0)),
            Scale(c) => accumulate(grads, a, ia, |d| axpy(d, g, c)),
            Exp => pointwise(grads, a, ia, g, |i| y[i]),
            Log => pointwise(grads, a, ia, g, |i| 1.0 / x[i]),
            Sigmoid => pointwise(grads, a, ia, g, |i| y[i] * (1.0 - y[i])),
            Tanh => pointwise(grads, a, ia, g, |i| 1.0 - y[i] * y[i]),
            LeakyRelu(slope) => pointwise(grads, a, ia, g, |i| if x[i] > 0.0 { 1.0 } else { slope }),
            Square => pointwise(grads, a, ia, g, |i| 2.0 * x[i]),
            Softplus => pointwise(grads, a, ia, g, |i| kernels::sigmoid(x[i])),
            Clamp { lo, hi } => {
                pointwise(grads, a, ia, g, |i| if x[i] >= lo && x[i] <= hi { 1.0 } else { 0.0 })
            }
            SliceLastAxis { start, end } => {
                let c = a.value.cols();
                let w = end - start;
                accumulate(grads, a, ia, |d| {
                    for (d, gr) in d.chunks_mut(c).zip(g.chunks(w)) {
                        axpy(&mut d[start..end], gr, 1.0);
                    }
                });
            }
            LogSumExpLastAxis => {
                let c = a.value.cols();
                accumulate(grads, a, ia, |d| {
                    for (r, (d, xr)) in d.chunks_mut(c).zip(x.chunks(c)).enumerate() {
                        for (d, &v) in d.iter_mut().zip(xr) {
                            *d += g[r] * (v - y[r]).exp();
                        }
                    }
                });
            }
        }
    }
}

fn axpy(d: &mut [f64], g: &[f64], c: f64) {
    for (d, g) in d.iter_mut().zip(g) {
        *d += c * g;
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], node: &Node, idx: usize, f: impl FnOnce(&mut [f64])) {
    if !node.requires_grad {
        return;
    }
    let slot = grads[idx].get_or_insert_with(|| vec![0.0; node.value.len()]);
    f(slot);
}

fn pointwise(
    grads: &mut [Option<Vec<f64>>],
    node: &Node,
    idx: usize,
    g: &[f64],
    local: impl Fn(usize) -> f64,
) {
    accumulate(grads, node, idx, |d| {
        for (i, (d, g)) in d.iter_mut().zip(g).enumerate() {
            *d += g * local(i);
        }
    });
}

/// Gradients of a scalar with respect to the trainable leaves of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `leaf` is not a trainable leaf or the output does not depend on it.
    pub fn get(&self, leaf: Var) -> Option<&Tensor> {
        self.grads.get(leaf.0).and_then(Option::as_ref)
    }

    /// Gradient for `leaf`, or zeros shaped like it when no path reaches it.
    pub fn wrt(&self, tape: &Tape, leaf: Var) -> Tensor {
        self.get(leaf)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(leaf).shape()))
    }
}
