use super::tensor::{split_axis, strides, Tensor};
use super::GraphError;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    SumAll(Var),
    SumAxis(Var, usize),
    MeanAll(Var),
    MeanAxis(Var, usize),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Softmax(Var, usize),
    BroadcastTo(Var),
    Scale(Var, f64),
    AddScalar(Var),
    SqNorm(Var),
    PairwiseSqDist(Var, Var),
    GradReverse(Var, f64),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only tape of tensor operations supporting one reverse sweep.
///
/// Nodes are stored in creation order, which is a topological order, so the
/// backward pass walks the tape from the loss towards the leaves exactly once.
/// Elementwise binary operations require identical shapes; implicit
/// broadcasting never happens, use [`Graph::broadcast_to`] explicitly.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backpropagated: bool,
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

    /// Records a trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies the value of `x` into a fresh constant, cutting the gradient path.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, x: Var) -> &Tensor {
        &self.nodes[x.0].value
    }

    pub fn shape(&self, x: Var) -> &[usize] {
        self.nodes[x.0].value.shape()
    }

    pub fn requires_grad(&self, x: Var) -> bool {
        self.nodes[x.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), GraphError> {
        if self.shape(a) != self.shape(b) {
            return Err(GraphError::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn check_axis(&self, op: &'static str, x: Var, axis: usize) -> Result<(), GraphError> {
        let rank = self.shape(x).len();
        if axis >= rank {
            return Err(GraphError::InvalidAxis { op, axis, rank });
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        self.derived(value, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        Ok(self.derived(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        Ok(self.derived(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        Ok(self.derived(v, Op::Mul(a, b), &[a, b]))
    }

    /// `[m,k]·[k,n]` or batched `[b,m,k]·[b,k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let mismatch = || GraphError::ShapeMismatch {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        let (batch, m, k, n, out_shape) = match (sa.as_slice(), sb.as_slice()) {
            ([m, k], [k2, n]) if k == k2 => (1, *m, *k, *n, vec![*m, *n]),
            ([b, m, k], [b2, k2, n]) if b == b2 && k == k2 => (*b, *m, *k, *n, vec![*b, *m, *n]),
            _ => return Err(mismatch()),
        };
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for bi in 0..batch {
            gemm_nn(
                &da[bi * m * k..(bi + 1) * m * k],
                &db[bi * k * n..(bi + 1) * k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let v = Tensor::new(out_shape, out)?;
        Ok(self.derived(v, Op::MatMul(a, b), &[a, b]))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var, GraphError> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(GraphError::InvalidAxis {
                op: "transpose",
                axis: 1,
                rank: shape.len(),
            });
        }
        let v = transpose_last2(self.value(x));
        Ok(self.derived(v, Op::Transpose(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, GraphError> {
        let v = self.value(x).clone().reshaped(shape)?;
        Ok(self.derived(v, Op::Reshape(x), &[x]))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var, GraphError> {
        let first = *xs.first().ok_or(GraphError::EmptyConcat)?;
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (p, q))| d == axis || p == q);
            if !compatible {
                return Err(GraphError::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = split_axis(&out_shape, axis);
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &x in xs {
                let ext = self.shape(x)[axis];
                let chunk = ext * inner;
                out.extend_from_slice(&self.value(x).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let v = Tensor::new(out_shape, out)?;
        Ok(self.derived(v, Op::Concat(xs.to_vec(), axis), xs))
    }

    /// Half-open range `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var, GraphError> {
        self.check_axis("slice", x, axis)?;
        let shape = self.shape(x).to_vec();
        if start >= end || end > shape[axis] {
            return Err(GraphError::BadSlice {
                axis,
                start,
                end,
                extent: shape[axis],
            });
        }
        let (outer, ext, inner) = split_axis(&shape, axis);
        let width = end - start;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = o * ext * inner;
            out.extend_from_slice(&src[base + start * inner..base + end * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = width;
        let v = Tensor::new(out_shape, out)?;
        Ok(self.derived(v, Op::Slice { x, axis, start }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.derived(Tensor::scalar(s), Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: f64 = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.derived(Tensor::scalar(s), Op::MeanAll(x), &[x])
    }

    /// Sum along `axis`, keeping it with extent 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var, GraphError> {
        self.check_axis("sum_axis", x, axis)?;
        let v = reduce_axis(self.value(x), axis, 1.0);
        Ok(self.derived(v, Op::SumAxis(x, axis), &[x]))
    }

    /// Mean along `axis`, keeping it with extent 1.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var, GraphError> {
        self.check_axis("mean_axis", x, axis)?;
        let n = self.shape(x)[axis] as f64;
        let v = reduce_axis(self.value(x), axis, 1.0 / n);
        Ok(self.derived(v, Op::MeanAxis(x, axis), &[x]))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, GraphError> {
        self.check_axis("softmax", x, axis)?;
        let t = self.value(x);
        let (outer, n, inner) = split_axis(t.shape(), axis);
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| o * n * inner + j * inner + i;
                let max = (0..n).map(|j| src[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..n {
                    let e = (src[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    z += e;
                }
                for j in 0..n {
                    out[idx(j)] /= z;
                }
            }
        }
        let v = Tensor::new(t.shape().to_vec(), out)?;
        Ok(self.derived(v, Op::Softmax(x, axis), &[x]))
    }

    /// Right-aligned broadcast: every source axis must equal the target extent
    /// or be 1, and missing leading axes are added.
    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var, GraphError> {
        let src = self.shape(x).to_vec();
        let map = broadcast_strides(&src, shape).ok_or_else(|| GraphError::BadBroadcast {
            from: src.clone(),
            to: shape.to_vec(),
        })?;
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(shape.iter().product());
        for_each_broadcast_index(shape, &map, |_, si| out.push(data[si]));
        let v = Tensor::new(shape.to_vec(), out)?;
        Ok(self.derived(v, Op::BroadcastTo(x), &[x]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    /// Sum of squared entries, as a scalar.
    pub fn squared_norm(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v * v).sum();
        self.derived(Tensor::scalar(s), Op::SqNorm(x), &[x])
    }

    /// `D[i,j] = ‖a_i − b_j‖²` for `a: [n,d]`, `b: [m,d]`.
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (n, m, d) = match (sa.as_slice(), sb.as_slice()) {
            ([n, d], [m, d2]) if d == d2 => (*n, *m, *d),
            _ => {
                return Err(GraphError::ShapeMismatch {
                    op: "pairwise_sq_dist",
                    lhs: sa,
                    rhs: sb,
                })
            }
        };
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let ai = &da[i * d..(i + 1) * d];
            for j in 0..m {
                let bj = &db[j * d..(j + 1) * d];
                out[i * m + j] = ai.iter().zip(bj).map(|(p, q)| (p - q) * (p - q)).sum();
            }
        }
        let v = Tensor::new(vec![n, m], out)?;
        Ok(self.derived(v, Op::PairwiseSqDist(a, b), &[a, b]))
    }

    /// Identity forward; the backward pass multiplies incoming gradients by `-weight`.
    pub fn grad_reverse(&mut self, x: Var, weight: f64) -> Var {
        let v = self.value(x).clone();
        self.derived(v, Op::GradReverse(x, weight), &[x])
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Gradients of leaves stay available through [`Graph::grad`] until
    /// [`Graph::reset_grads`]; a second call without reset is rejected.
    pub fn backward(&mut self, loss: Var) -> Result<(), GraphError> {
        if self.backpropagated {
            return Err(GraphError::AlreadyBackpropagated);
        }
        if self.value(loss).numel() != 1 {
            return Err(GraphError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.backpropagated = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient of the last backward loss w.r.t. leaf `x`; `None` if unreached.
    pub fn grad(&self, x: Var) -> Option<&Tensor> {
        self.grads.get(x.0).and_then(|g| g.as_ref())
    }

    /// Like [`Graph::grad`] but returns zeros for leaves the loss does not reach.
    pub fn grad_or_zeros(&self, x: Var) -> Tensor {
        self.grad(x)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.shape(x)))
    }

    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backpropagated = false;
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], x: Var, g: Tensor) {
        if !self.nodes[x.0].requires_grad {
            return;
        }
        match &mut grads[x.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        let val = |v: Var| &self.nodes[v.0].value;
        let with = |x: &Tensor, f: &dyn Fn(f64, f64) -> f64| {
            let data = g.data().iter().zip(x.data()).map(|(&gi, &xi)| f(gi, xi)).collect();
            Tensor::new(x.shape().to_vec(), data).expect("same shape")
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let ga = with(val(*b), &|gi, bi| gi * bi);
                let gb = with(val(*a), &|gi, ai| gi * ai);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (batch, m, k, n) = match ta.shape() {
                    [m, k] => (1, *m, *k, tb.shape()[1]),
                    [bt, m, k] => (*bt, *m, *k, tb.shape()[2]),
                    _ => unreachable!(),
                };
                if self.nodes[a.0].requires_grad {
                    let mut ga = vec![0.0; batch * m * k];
                    for bi in 0..batch {
                        gemm_nt(
                            &g.data()[bi * m * n..(bi + 1) * m * n],
                            &tb.data()[bi * k * n..(bi + 1) * k * n],
                            &mut ga[bi * m * k..(bi + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    let ga = Tensor::new(ta.shape().to_vec(), ga).expect("shape");
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = vec![0.0; batch * k * n];
                    for bi in 0..batch {
                        gemm_tn(
                            &ta.data()[bi * m * k..(bi + 1) * m * k],
                            &g.data()[bi * m * n..(bi + 1) * m * n],
                            &mut gb[bi * k * n..(bi + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    let gb = Tensor::new(tb.shape().to_vec(), gb).expect("shape");
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Transpose(x) => self.accumulate(grads, *x, transpose_last2(g)),
            Op::Reshape(x) => {
                let gx = g.clone().reshaped(val(*x).shape()).expect("shape");
                self.accumulate(grads, *x, gx);
            }
            Op::Concat(xs, axis) => {
                let (outer, total, inner) = split_axis(g.shape(), *axis);
                let mut offset = 0;
                for &x in xs {
                    let ext = val(x).shape()[*axis];
                    let mut gx = Vec::with_capacity(outer * ext * inner);
                    for o in 0..outer {
                        let base = o * total * inner + offset * inner;
                        gx.extend_from_slice(&g.data()[base..base + ext * inner]);
                    }
                    offset += ext;
                    let gx = Tensor::new(val(x).shape().to_vec(), gx).expect("shape");
                    self.accumulate(grads, x, gx);
                }
            }
            Op::Slice { x, axis, start } => {
                let shape = val(*x).shape();
                let (outer, ext, inner) = split_axis(shape, *axis);
                let width = g.shape()[*axis];
                let mut gx = vec![0.0; shape.iter().product()];
                for o in 0..outer {
                    let dst = o * ext * inner + start * inner;
                    let src = o * width * inner;
                    gx[dst..dst + width * inner]
                        .copy_from_slice(&g.data()[src..src + width * inner]);
                }
                let gx = Tensor::new(shape.to_vec(), gx).expect("shape");
                self.accumulate(grads, *x, gx);
            }
            Op::SumAll(x) => {
                self.accumulate(grads, *x, Tensor::full(val(*x).shape(), g.item()));
            }
            Op::MeanAll(x) => {
                let n = val(*x).numel() as f64;
                self.accumulate(grads, *x, Tensor::full(val(*x).shape(), g.item() / n));
            }
            Op::SumAxis(x, axis) | Op::MeanAxis(x, axis) => {
                let shape = val(*x).shape();
                let (outer, ext, inner) = split_axis(shape, *axis);
                let factor = if matches!(self.nodes[i].op, Op::MeanAxis(..)) {
                    1.0 / ext as f64
                } else {
                    1.0
                };
                let mut gx = vec![0.0; shape.iter().product()];
                for o in 0..outer {
                    for j in 0..ext {
                        for k in 0..inner {
                            gx[o * ext * inner + j * inner + k] = g.data()[o * inner + k] * factor;
                        }
                    }
                }
                let gx = Tensor::new(shape.to_vec(), gx).expect("shape");
                self.accumulate(grads, *x, gx);
            }
            Op::Exp(x) => self.accumulate(grads, *x, with(out, &|gi, yi| gi * yi)),
            Op::Log(x) => self.accumulate(grads, *x, with(val(*x), &|gi, xi| gi / xi)),
            Op::Sqrt(x) => self.accumulate(grads, *x, with(out, &|gi, yi| 0.5 * gi / yi)),
            Op::Square(x) => self.accumulate(grads, *x, with(val(*x), &|gi, xi| 2.0 * gi * xi)),
            Op::Sigmoid(x) => {
                self.accumulate(grads, *x, with(out, &|gi, yi| gi * yi * (1.0 - yi)));
            }
            Op::Tanh(x) => self.accumulate(grads, *x, with(out, &|gi, yi| gi * (1.0 - yi * yi))),
            Op::Relu(x) => {
                let gx = with(val(*x), &|gi, xi| if xi > 0.0 { gi } else { 0.0 });
                self.accumulate(grads, *x, gx);
            }
            Op::Softplus(x) => {
                self.accumulate(grads, *x, with(val(*x), &|gi, xi| gi * sigmoid(xi)));
            }
            Op::Softmax(x, axis) => {
                let (outer, n, inner) = split_axis(out.shape(), *axis);
                let (y, gd) = (out.data(), g.data());
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for k in 0..inner {
                        let idx = |j: usize| o * n * inner + j * inner + k;
                        let dot: f64 = (0..n).map(|j| gd[idx(j)] * y[idx(j)]).sum();
                        for j in 0..n {
                            gx[idx(j)] = y[idx(j)] * (gd[idx(j)] - dot);
                        }
                    }
                }
                let gx = Tensor::new(out.shape().to_vec(), gx).expect("shape");
                self.accumulate(grads, *x, gx);
            }
            Op::BroadcastTo(x) => {
                let src = val(*x).shape();
                let map = broadcast_strides(src, out.shape()).expect("validated");
                let mut gx = vec![0.0; src.iter().product()];
                let gd = g.data();
                for_each_broadcast_index(out.shape(), &map, |oi, si| gx[si] += gd[oi]);
                let gx = Tensor::new(src.to_vec(), gx).expect("shape");
                self.accumulate(grads, *x, gx);
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, g.map(|v| v * c)),
            Op::AddScalar(x) => self.accumulate(grads, *x, g.clone()),
            Op::SqNorm(x) => {
                let s = g.item();
                self.accumulate(grads, *x, val(*x).map(|v| 2.0 * s * v));
            }
            Op::PairwiseSqDist(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (n, d) = (ta.shape()[0], ta.shape()[1]);
                let m = tb.shape()[0];
                let (da, db, gd) = (ta.data(), tb.data(), g.data());
                let mut ga = vec![0.0; n * d];
                let mut gb = vec![0.0; m * d];
                for i in 0..n {
                    for j in 0..m {
                        let w = 2.0 * gd[i * m + j];
                        if w == 0.0 {
                            continue;
                        }
                        for k in 0..d {
                            let diff = w * (da[i * d + k] - db[j * d + k]);
                            ga[i * d + k] += diff;
                            gb[j * d + k] -= diff;
                        }
                    }
                }
                self.accumulate(grads, *a, Tensor::new(vec![n, d], ga).expect("shape"));
                self.accumulate(grads, *b, Tensor::new(vec![m, d], gb).expect("shape"));
            }
            Op::GradReverse(x, w) => self.accumulate(grads, *x, g.map(|v| -w * v)),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn reduce_axis(t: &Tensor, axis: usize, factor: f64) -> Tensor {
    let (outer, ext, inner) = split_axis(t.shape(), axis);
    let src = t.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for j in 0..ext {
            let row = &src[o * ext * inner + j * inner..o * ext * inner + (j + 1) * inner];
            for (acc, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    for v in &mut out {
        *v *= factor;
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = 1;
    Tensor::new(shape, out).expect("shape")
}

fn transpose_last2(t: &Tensor) -> Tensor {
    let shape = t.shape();
    let r = shape.len();
    let (rows, cols) = (shape[r - 2], shape[r - 1]);
    let batch: usize = shape[..r - 2].iter().product();
    let src = t.data();
    let mut out = vec![0.0; src.len()];
    for b in 0..batch {
        let off = b * rows * cols;
        for i in 0..rows {
            for j in 0..cols {
                out[off + j * rows + i] = src[off + i * cols + j];
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape.swap(r - 2, r - 1);
    Tensor::new(new_shape, out).expect("shape")
}

/// Source strides aligned to `target` (0 on broadcast axes), or `None` if incompatible.
fn broadcast_strides(src: &[usize], target: &[usize]) -> Option<Vec<usize>> {
    if src.len() > target.len() {
        return None;
    }
    let lead = target.len() - src.len();
    let src_strides = strides(src);
    let mut map = vec![0; target.len()];
    for (d, &ext) in src.iter().enumerate() {
        let t = target[lead + d];
        if ext == t {
            map[lead + d] = src_strides[d];
        } else if ext != 1 {
            return None;
        }
    }
    Some(map)
}

fn for_each_broadcast_index(shape: &[usize], map: &[usize], mut f: impl FnMut(usize, usize)) {
    let total: usize = shape.iter().product();
    if total == 0 {
        return;
    }
    let r = shape.len();
    let mut idx = vec![0usize; r];
    let mut src = 0usize;
    for oi in 0..total {
        f(oi, src);
        for d in (0..r).rev() {
            idx[d] += 1;
            src += map[d];
            if idx[d] < shape[d] {
                break;
            }
            src -= map[d] * idx[d];
            idx[d] = 0;
        }
    }
}

/// `c += a·b` with `a: [m,k]`, `b: [k,n]`.
fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ci = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let bp = &b[p * n..(p + 1) * n];
            for (cv, bv) in ci.iter_mut().zip(bp) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c += g·bᵀ` with `g: [m,n]`, `b: [k,n]`, `c: [m,k]`.
fn gemm_nt(g: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let bp = &b[p * n..(p + 1) * n];
            c[i * k + p] += gi.iter().zip(bp).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `c += aᵀ·g` with `a: [m,k]`, `g: [m,n]`, `c: [k,n]`.
fn gemm_tn(a: &[f64], g: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let cp = &mut c[p * n..(p + 1) * n];
            for (cv, gv) in cp.iter_mut().zip(gi) {
                *cv += aip * gv;
            }
        }
    }
}
