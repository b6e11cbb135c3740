use std::collections::HashMap;

use super::{gemm, AutodiffError, Gradients, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Maximum(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    RowSum(Var),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Linear record of every primitive evaluated during a forward pass.
///
/// Backward replays the record in reverse, so every node is visited once and
/// a value consumed by several nodes accumulates one contribution from each.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<String, Var>,
    bound_order: Vec<(String, Var)>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Grads {
    adj: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.adj.get(v.0).and_then(|g| g.as_deref())
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contribution: impl FnOnce(&mut Vec<f64>), len: usize) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    contribution(buf);
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Leaf holding a constant; it receives an adjoint but is never a parameter.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Bind a named parameter from `store`. Binding the same name twice
    /// returns the same leaf so repeated uses accumulate into one gradient.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, AutodiffError> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let t = store.get(name)?.clone();
        let v = self.push(t, Op::Leaf);
        self.bound.insert(name.to_string(), v);
        self.bound_order.push((name.to_string(), v));
        Ok(v)
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.bound_order.iter().map(|(n, v)| (n.as_str(), *v))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (ta.dims2(), tb.dims2());
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, 0.0);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// `a[m,n] + row[1,n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let (ta, tr) = (self.value(a), self.value(row));
        let (m, n) = ta.dims2();
        if tr.len() != n {
            return Err(shape_err("add_row", ta, tr));
        }
        let mut out = ta.data().to_vec();
        for r in out.chunks_mut(n.max(1)) {
            for (o, b) in r.iter_mut().zip(tr.data()) {
                *o += b;
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::AddRow(a, row)))
    }

    /// `a[m,n] * row[1,n]` broadcast over rows.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let (ta, tr) = (self.value(a), self.value(row));
        let (m, n) = ta.dims2();
        if tr.len() != n {
            return Err(shape_err("mul_row", ta, tr));
        }
        let mut out = ta.data().to_vec();
        for r in out.chunks_mut(n.max(1)) {
            for (o, b) in r.iter_mut().zip(tr.data()) {
                *o *= b;
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MulRow(a, row)))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.dims2() != tb.dims2() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("minimum", a, b, f64::min, Op::Minimum(a, b))
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("maximum", a, b, f64::max, Op::Maximum(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a).map(f);
        self.push(t, op)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Elementwise clamp against per-element bounds given as constants.
    pub fn clamp_between(&mut self, a: Var, lo: &[f64], hi: &[f64]) -> Result<Var, AutodiffError> {
        let lo_v = self.constant(Tensor::new(self.value(a).shape().to_vec(), lo.to_vec())?);
        let hi_v = self.constant(Tensor::new(self.value(a).shape().to_vec(), hi.to_vec())?);
        let m = self.maximum(a, lo_v)?;
        self.minimum(m, hi_v)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = parts.first().ok_or(AutodiffError::EmptyTape)?;
        let m = self.value(*first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rows() != m {
                return Err(shape_err("concat_cols", self.value(*first), t));
            }
            widths.push(t.cols());
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `[start, end)` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        if start > end || end > n {
            return Err(AutodiffError::Shape {
                op: "slice_cols",
                lhs: t.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&t.row_slice(r)[start..end]);
        }
        Ok(self.push(Tensor::matrix(m, w, out)?, Op::SliceCols(a, start)))
    }

    /// Per-row sum: `[m,n] -> [m,1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (m, _) = t.dims2();
        let out: Vec<f64> = (0..m).map(|r| t.row_slice(r).iter().sum()).collect();
        self.push(Tensor::matrix(m, 1, out).expect("row_sum"), Op::RowSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s: f64 = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Smallest |pre-activation| over every ReLU on the tape. Finite-difference
    /// checks are only meaningful when this stays well above the step size.
    pub fn min_relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(a),
                _ => None,
            })
            .flat_map(|a| self.nodes[a.0].value.data().iter().map(|x| x.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads, AutodiffError> {
        if self.nodes.is_empty() {
            return Err(AutodiffError::EmptyTape);
        }
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(&node.op, &node.value, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(Grads { adj })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(a), val(b));
                let ((m, k), (_, n)) = (ta.dims2(), tb.dims2());
                // dA = G · Bᵀ, dB = Aᵀ · G
                accumulate(
                    &mut adj[a.0],
                    |buf| gemm(m, n, k, g, false, tb.data(), true, buf, 1.0),
                    m * k,
                );
                accumulate(
                    &mut adj[b.0],
                    |buf| gemm(k, m, n, ta.data(), true, g, false, buf, 1.0),
                    k * n,
                );
            }
            Op::AddRow(a, row) => {
                let n = out.cols().max(1);
                accumulate(&mut adj[a.0], |buf| add_into(buf, g), g.len());
                accumulate(
                    &mut adj[row.0],
                    |buf| {
                        for r in g.chunks(n) {
                            add_into(buf, r);
                        }
                    },
                    n,
                );
            }
            Op::MulRow(a, row) => {
                let n = out.cols().max(1);
                let (ta, tr) = (val(a), val(row));
                accumulate(
                    &mut adj[a.0],
                    |buf| {
                        for (bc, gc) in buf.chunks_mut(n).zip(g.chunks(n)) {
                            for j in 0..n {
                                bc[j] += gc[j] * tr.data()[j];
                            }
                        }
                    },
                    g.len(),
                );
                accumulate(
                    &mut adj[row.0],
                    |buf| {
                        for (ac, gc) in ta.data().chunks(n).zip(g.chunks(n)) {
                            for j in 0..n {
                                buf[j] += gc[j] * ac[j];
                            }
                        }
                    },
                    n,
                );
            }
            Op::Add(a, b) => {
                accumulate(&mut adj[a.0], |buf| add_into(buf, g), g.len());
                accumulate(&mut adj[b.0], |buf| add_into(buf, g), g.len());
            }
            Op::Sub(a, b) => {
                accumulate(&mut adj[a.0], |buf| add_into(buf, g), g.len());
                accumulate(
                    &mut adj[b.0],
                    |buf| {
                        for (o, x) in buf.iter_mut().zip(g) {
                            *o -= x;
                        }
                    },
                    g.len(),
                );
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(a), val(b));
                accumulate(&mut adj[a.0], |buf| fma_into(buf, g, tb.data()), g.len());
                accumulate(&mut adj[b.0], |buf| fma_into(buf, g, ta.data()), g.len());
            }
            Op::Scale(a, s) => accumulate(
                &mut adj[a.0],
                |buf| {
                    for (o, x) in buf.iter_mut().zip(g) {
                        *o += s * x;
                    }
                },
                g.len(),
            ),
            Op::AddScalar(a) => accumulate(&mut adj[a.0], |buf| add_into(buf, g), g.len()),
            Op::Relu(a) => {
                let x = val(a).data();
                accumulate(
                    &mut adj[a.0],
                    |buf| {
                        for i in 0..g.len() {
                            if x[i] > 0.0 {
                                buf[i] += g[i];
                            }
                        }
                    },
                    g.len(),
                );
            }
            Op::Tanh(a) => {
                let y = out.data();
                accumulate(
                    &mut adj[a.0],
                    |buf| {
                        for i in 0..g.len() {
                            buf[i] += g[i] * (1.0 - y[i] * y[i]);
                        }
                    },
                    g.len(),
                );
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                accumulate(
                    &mut adj[a.0],
                    |buf| {
                        for i in 0..g.len() {
                            buf[i] += g[i] * y[i] * (1.0 - y[i]);
                        }
                    },
                    g.len(),
                );
            }
            Op::Exp(a) => accumulate(&mut adj[a.0], |buf| fma_into(buf, g, out.data()), g.len()),
            Op::Square(a) => {
                let x = val(a).data();
                accumulate(
                    &mut adj[a.0],
                    |buf| {
                        for i in 0..g.len() {
                            buf[i] += 2.0 * x[i] * g[i];
                        }
                    },
                    g.len(),
                );
            }
            Op::Clamp(a, lo, hi) => {
                let x = val(a).data();
                accumulate(
                    &mut adj[a.0],
                    |buf| {
                        for i in 0..g.len() {
                            if x[i] >= lo && x[i] <= hi {
                                buf[i] += g[i];
                            }
                        }
                    },
                    g.len(),
                );
            }
            Op::Minimum(a, b) | Op::Maximum(a, b) => {
                let take_a_when_le = matches!(op, Op::Minimum(..));
                let (x, y) = (val(a).data(), val(b).data());
                let pick_a: Vec<bool> = x
                    .iter()
                    .zip(y)
                    .map(|(p, q)| if take_a_when_le { p <= q } else { p >= q })
                    .collect();
                accumulate(
                    &mut adj[a.0],
                    |buf| {
                        for i in 0..g.len() {
                            if pick_a[i] {
                                buf[i] += g[i];
                            }
                        }
                    },
                    g.len(),
                );
                accumulate(
                    &mut adj[b.0],
                    |buf| {
                        for i in 0..g.len() {
                            if !pick_a[i] {
                                buf[i] += g[i];
                            }
                        }
                    },
                    g.len(),
                );
            }
            Op::ConcatCols(ref parts) => {
                let (m, n) = out.dims2();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    accumulate(
                        &mut adj[p.0],
                        |buf| {
                            for r in 0..m {
                                let src = &g[r * n + offset..r * n + offset + w];
                                add_into(&mut buf[r * w..(r + 1) * w], src);
                            }
                        },
                        m * w,
                    );
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (m, w) = out.dims2();
                let n = val(a).cols();
                accumulate(
                    &mut adj[a.0],
                    |buf| {
                        for r in 0..m {
                            add_into(&mut buf[r * n + start..r * n + start + w], &g[r * w..(r + 1) * w]);
                        }
                    },
                    m * n,
                );
            }
            Op::RowSum(a) => {
                let (m, n) = val(a).dims2();
                accumulate(
                    &mut adj[a.0],
                    |buf| {
                        for r in 0..m {
                            for v in &mut buf[r * n..(r + 1) * n] {
                                *v += g[r];
                            }
                        }
                    },
                    m * n,
                );
            }
            Op::Sum(a) => {
                let len = val(a).len();
                accumulate(&mut adj[a.0], |buf| buf.iter_mut().for_each(|v| *v += g[0]), len);
            }
            Op::Mean(a) => {
                let len = val(a).len();
                let s = g[0] / len.max(1) as f64;
                accumulate(&mut adj[a.0], |buf| buf.iter_mut().for_each(|v| *v += s), len);
            }
        }
    }

    /// Gradients of every bound parameter. Bound parameters the loss never
    /// reached get explicit zeros.
    pub fn param_grads(&self, grads: &Grads) -> Gradients {
        let mut out = Gradients::new();
        for (name, v) in &self.bound_order {
            let shape = self.value(*v).shape().to_vec();
            let data = match grads.get(*v) {
                Some(g) => g.to_vec(),
                None => vec![0.0; shape.iter().product()],
            };
            out.insert(name.clone(), Tensor::new(shape, data).expect("grad shape"));
        }
        out
    }
}

fn add_into(buf: &mut [f64], g: &[f64]) {
    for (o, x) in buf.iter_mut().zip(g) {
        *o += x;
    }
}

fn fma_into(buf: &mut [f64], g: &[f64], w: &[f64]) {
    for i in 0..buf.len() {
        buf[i] += g[i] * w[i];
    }
}
