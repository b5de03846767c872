use super::{gemm, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`]. Only meaningful for the graph that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, c: f64 },
    Tanh { a: Var },
    Sin { a: Var },
    Gelu { a: Var },
    Silu { a: Var },
    Relu { a: Var },
    Softmax { a: Var },
    Sum { a: Var },
    Mean { a: Var },
    Square { a: Var },
    Concat { parts: Vec<Var> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// Append-only record of forward operations. Every node's inputs precede it,
/// so a reverse sweep over the node list is a valid reverse topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; zeros if `v` does not reach the root.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

/// 2-D broadcasting layout: `(rows, cols)` of an operand relative to the output.
#[derive(Clone, Copy)]
struct Bcast {
    rows: usize,
    cols: usize,
}

impl Bcast {
    #[inline]
    fn index(self, i: usize, j: usize) -> usize {
        let r = if self.rows == 1 { 0 } else { i };
        let c = if self.cols == 1 { 0 } else { j };
        r * self.cols + c
    }
}

fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(Vec<usize>, usize, usize)> {
    if a.shape() == b.shape() {
        return Ok((a.shape().to_vec(), a.rows(), a.cols()));
    }
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    let fit = |x: usize, y: usize| x == y || x == 1 || y == 1;
    if !fit(ar, br) || !fit(ac, bc) {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    let (r, c) = (ar.max(br), ac.max(bc));
    let shape = if ar == r && ac == c {
        a.shape().to_vec()
    } else if br == r && bc == c {
        b.shape().to_vec()
    } else {
        vec![r, c]
    };
    Ok((shape, r, c))
}

fn gelu(x: f64) -> f64 {
    const K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (K * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const K: f64 = 0.797_884_560_802_865_4;
    let inner = K * (x + 0.044715 * x * x * x);
    let th = inner.tanh();
    let dinner = K * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives a gradient (not tied to any parameter).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a stored parameter as a leaf. Bind once per graph and reuse the
    /// handle; repeated use accumulates its gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        let v = self.push(p.value.clone(), Op::Leaf, p.requires_grad);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` with `b` stored as `n×k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let (kb, n) = if trans_b {
            (bv.shape()[1], bv.shape()[0])
        } else {
            (bv.shape()[0], bv.shape()[1])
        };
        if k != kb {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), trans_b, &mut out, 0.0);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul { a, b, trans_b }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, kind: u8) -> Result<Var> {
        let name = match kind {
            0 => "add",
            1 => "sub",
            _ => "mul",
        };
        let (av, bv) = (self.value(a), self.value(b));
        let (shape, r, c) = broadcast_shape(name, av, bv)?;
        let data = if av.shape() == bv.shape() {
            let (x, y) = (av.data(), bv.data());
            match kind {
                0 => x.iter().zip(y).map(|(p, q)| p + q).collect(),
                1 => x.iter().zip(y).map(|(p, q)| p - q).collect(),
                _ => x.iter().zip(y).map(|(p, q)| p * q).collect(),
            }
        } else {
            let la = Bcast { rows: av.rows(), cols: av.cols() };
            let lb = Bcast { rows: bv.rows(), cols: bv.cols() };
            let (x, y) = (av.data(), bv.data());
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                for j in 0..c {
                    let (p, q) = (x[la.index(i, j)], y[lb.index(i, j)]);
                    out.push(match kind {
                        0 => p + q,
                        1 => p - q,
                        _ => p * q,
                    });
                }
            }
            out
        };
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(a) || self.rg(b);
        let op = match kind {
            0 => Op::Add { a, b },
            1 => Op::Sub { a, b },
            _ => Op::Mul { a, b },
        };
        Ok(self.push(value, op, rg))
    }

    /// Elementwise sum with 2-D row/column/scalar broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 1)
    }

    /// Elementwise product with 2-D row/column/scalar broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 2)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        let rg = self.rg(a);
        self.push(value, Op::Scale { a, c }, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh { a }, rg)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sin);
        let rg = self.rg(a);
        self.push(value, Op::Sin { a }, rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu);
        let rg = self.rg(a);
        self.push(value, Op::Gelu { a }, rg)
    }

    /// `x·σ(x)` (swish).
    pub fn silu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(silu);
        let rg = self.rg(a);
        self.push(value, Op::Silu { a }, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu { a }, rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        self.push(value, Op::Square { a }, rg)
    }

    /// Softmax over the last axis, max-shifted per row.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let c = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(c) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(value, Op::Softmax { a }, rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum { a }, rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.numel() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean { a }, rg)
    }

    /// Concatenates 2-D tensors with equal row counts along the columns.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(Error::shape("concat", self.value(*first).shape(), v.shape()));
            }
            cols += v.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::new(vec![rows, cols], data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::Concat { parts: parts.to_vec() }, rg))
    }

    /// Mean squared difference, composed from recorded ops.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.sub(pred, target)?;
        let sq = self.square(d);
        Ok(self.mean(sq))
    }

    /// Reverse sweep from a scalar root. Gradients are returned per node;
    /// parameters are not touched.
    pub fn gradients(&self, root: Var) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        let n = root.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes[..n].iter().map(|nd| nd.value.shape().to_vec()).collect(),
        })
    }

    /// Reverse sweep that accumulates into the parameter store.
    pub fn backward(&self, root: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(root)?;
        for (i, node) in self.nodes.iter().enumerate().take(grads.grads.len()) {
            if let (Some(id), Some(g)) = (node.param, &grads.grads[i]) {
                store.accumulate_grad(id, g);
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = out.shape()[1];
                if self.rg(*a) {
                    // dA = dC · Bᵀ   (or dC · B when B is stored transposed)
                    let acc = slot(grads, *a, m * k);
                    gemm(m, n, k, g, false, bv.data(), !*trans_b, acc, 1.0);
                }
                if self.rg(*b) {
                    if *trans_b {
                        // B is n×k: dB = dCᵀ · A
                        let acc = slot(grads, *b, n * k);
                        gemm(n, m, k, g, true, av.data(), false, acc, 1.0);
                    } else {
                        // dB = Aᵀ · dC
                        let acc = slot(grads, *b, k * n);
                        gemm(k, m, n, av.data(), true, g, false, acc, 1.0);
                    }
                }
            }
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => {
                let sign_b = if matches!(node.op, Op::Sub { .. }) { -1.0 } else { 1.0 };
                let is_mul = matches!(node.op, Op::Mul { .. });
                let (r, c) = (out.rows(), out.cols());
                let (av, bv) = (self.value(*a), self.value(*b));
                let la = Bcast { rows: av.rows(), cols: av.cols() };
                let lb = Bcast { rows: bv.rows(), cols: bv.cols() };
                let same = av.numel() == out.numel() && bv.numel() == out.numel();
                if self.rg(*a) {
                    let acc = slot(grads, *a, av.numel());
                    if same {
                        if is_mul {
                            for ((s, gi), y) in acc.iter_mut().zip(g).zip(bv.data()) {
                                *s += gi * y;
                            }
                        } else {
                            for (s, gi) in acc.iter_mut().zip(g) {
                                *s += gi;
                            }
                        }
                    } else {
                        for i in 0..r {
                            for j in 0..c {
                                let gi = g[i * c + j];
                                let f = if is_mul { bv.data()[lb.index(i, j)] } else { 1.0 };
                                acc[la.index(i, j)] += gi * f;
                            }
                        }
                    }
                }
                if self.rg(*b) {
                    let acc = slot(grads, *b, bv.numel());
                    if same {
                        if is_mul {
                            for ((s, gi), x) in acc.iter_mut().zip(g).zip(av.data()) {
                                *s += gi * x;
                            }
                        } else {
                            for (s, gi) in acc.iter_mut().zip(g) {
                                *s += sign_b * gi;
                            }
                        }
                    } else {
                        for i in 0..r {
                            for j in 0..c {
                                let gi = g[i * c + j];
                                let f = if is_mul { av.data()[la.index(i, j)] } else { sign_b };
                                acc[lb.index(i, j)] += gi * f;
                            }
                        }
                    }
                }
            }
            Op::Scale { a, c } => {
                if self.rg(*a) {
                    let acc = slot(grads, *a, g.len());
                    for (s, gi) in acc.iter_mut().zip(g) {
                        *s += c * gi;
                    }
                }
            }
            Op::Tanh { a } => {
                if self.rg(*a) {
                    let acc = slot(grads, *a, g.len());
                    for ((s, gi), y) in acc.iter_mut().zip(g).zip(out.data()) {
                        *s += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Sin { a } => self.unary_grad(*a, g, grads, f64::cos),
            Op::Gelu { a } => self.unary_grad(*a, g, grads, gelu_grad),
            Op::Silu { a } => self.unary_grad(*a, g, grads, silu_grad),
            Op::Relu { a } => self.unary_grad(*a, g, grads, |x| if x > 0.0 { 1.0 } else { 0.0 }),
            Op::Square { a } => self.unary_grad(*a, g, grads, |x| 2.0 * x),
            Op::Softmax { a } => {
                if self.rg(*a) {
                    let c = out.cols();
                    let acc = slot(grads, *a, g.len());
                    for ((arow, grow), yrow) in acc
                        .chunks_mut(c)
                        .zip(g.chunks(c))
                        .zip(out.data().chunks(c))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(p, q)| p * q).sum();
                        for ((s, gi), y) in arow.iter_mut().zip(grow).zip(yrow) {
                            *s += y * (gi - dot);
                        }
                    }
                }
            }
            Op::Sum { a } | Op::Mean { a } => {
                if self.rg(*a) {
                    let n = self.value(*a).numel();
                    let f = if matches!(node.op, Op::Mean { .. }) {
                        g[0] / n as f64
                    } else {
                        g[0]
                    };
                    for s in slot(grads, *a, n).iter_mut() {
                        *s += f;
                    }
                }
            }
            Op::Concat { parts } => {
                let (rows, cols) = (out.rows(), out.cols());
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if self.rg(p) {
                        let acc = slot(grads, p, rows * pc);
                        for i in 0..rows {
                            let src = &g[i * cols + offset..i * cols + offset + pc];
                            for (s, gi) in acc[i * pc..(i + 1) * pc].iter_mut().zip(src) {
                                *s += gi;
                            }
                        }
                    }
                    offset += pc;
                }
            }
        }
    }

    fn unary_grad(
        &self,
        a: Var,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        deriv: impl Fn(f64) -> f64,
    ) {
        if !self.rg(a) {
            return;
        }
        let x = self.value(a).data();
        let acc = slot(grads, a, g.len());
        for ((s, gi), xi) in acc.iter_mut().zip(g).zip(x) {
            *s += gi * deriv(*xi);
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut g = Graph::new();
        let w = g.variable(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let sq = g.mul(w, w).unwrap();
        let s = g.sum(sq);
        let grads = g.gradients(s).unwrap();
        assert_eq!(grads.wrt(w).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut g = Graph::new();
        let w = g.variable(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(g.gradients(w), Err(Error::Contract(_))));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        match g.matmul(a, b) {
            Err(Error::Shape { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn mse_gradient_matches_closed_form() {
        // loss = mean((W x - y)^2) over an n-vector output; dL/dW = 2 (Wx - y) xᵀ / n
        let w = Tensor::matrix(3, 2, vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5]).unwrap();
        let x = Tensor::matrix(2, 1, vec![1.5, -2.0]).unwrap();
        let y = Tensor::matrix(3, 1, vec![0.1, 0.2, -0.3]).unwrap();
        let mut g = Graph::new();
        let wv = g.variable(w.clone());
        let xv = g.constant(x.clone());
        let yv = g.constant(y.clone());
        let pred = g.matmul(wv, xv).unwrap();
        let loss = g.mse(pred, yv).unwrap();
        let grad = g.gradients(loss).unwrap().wrt(wv);

        let wx = w.matmul(&x).unwrap();
        for i in 0..3 {
            let r = wx.data()[i] - y.data()[i];
            for j in 0..2 {
                let expect = 2.0 * r * x.data()[j] / 3.0;
                assert!((grad.data()[i * 2 + j] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn fan_out_accumulates_into_params() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::from_vec(vec![3.0])).unwrap();
        for _ in 0..2 {
            let mut g = Graph::new();
            let w = g.param(&store, id);
            let twice = g.add(w, w).unwrap();
            let s = g.sum(twice);
            g.backward(s, &mut store).unwrap();
        }
        // d(2w)/dw = 2 per pass, two passes without zeroing
        assert_eq!(store.get(id).grad.data(), &[4.0]);
        store.zero_grad();
        assert_eq!(store.get(id).grad.data(), &[0.0]);
    }

    #[test]
    fn softmax_shift_and_overflow() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_vec(vec![1000.0, 0.0]));
        let s = g.softmax(a);
        let v = g.value(s).data();
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1] >= 0.0 && v[1] < 1e-300);
        let z = g.constant(Tensor::from_vec(vec![0.0; 4]));
        let sz = g.softmax(z);
        assert_eq!(g.value(sz).data(), &[0.25; 4]);
    }

    #[test]
    fn broadcasting_rules() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let row = g.constant(Tensor::from_vec(vec![10.0, 20.0, 30.0]));
        let col = g.constant(Tensor::matrix(2, 1, vec![2.0, 3.0]).unwrap());
        let s = g.add(a, row).unwrap();
        assert_eq!(g.value(s).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let m = g.mul(col, a).unwrap();
        assert_eq!(g.shape(m), &[2, 3]);
        assert_eq!(g.value(m).data(), &[2.0, 4.0, 6.0, 12.0, 15.0, 18.0]);
        let bad = g.constant(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(g.add(a, bad).is_err());
    }
}
