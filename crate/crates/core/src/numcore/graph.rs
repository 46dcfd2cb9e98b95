//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Parameter
//! leaves borrow their data from a [`ParamStore`]; frozen or non-trainable
//! parameters act as constants and receive no gradient.

use super::kernels;
use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::matmul_dims;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Value<S> {
    Param(ParamId),
    Owned(Vec<S>),
}

enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, S),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Reshape(Var),
    Softmax(Var, usize),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<S>,
        rstd: Vec<S>,
    },
    RowCosine(Var, Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
}

struct Node<S> {
    shape: Vec<usize>,
    value: Value<S>,
    op: Op<S>,
    requires_grad: bool,
}

pub struct Graph<'p, S: Scalar> {
    store: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
}

/// Views a shape as a matrix: all leading dims folded into rows.
fn as_matrix(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        [.., c] => (shape[..shape.len() - 1].iter().product(), *c),
    }
}

impl<'p, S: Scalar> Graph<'p, S> {
    pub fn new(store: &'p ParamStore<S>) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(512),
        }
    }

    pub fn store(&self) -> &'p ParamStore<S> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[S] {
        match &self.nodes[v.0].value {
            Value::Param(id) => self.store.get(*id).data(),
            Value::Owned(d) => d,
        }
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<S> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).unwrap()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<S>, op: Op<S>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            value: Value::Owned(data),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.store.get(id);
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: t.is_trainable(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, shape: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Var> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape("constant", &shape, &[data.len()]));
        }
        Ok(self.push(shape, data, Op::Leaf, false))
    }

    pub fn constant_tensor(&mut self, t: &Tensor<S>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n) = matmul_dims(self.shape(a), self.shape(b))?;
        let out = kernels::matmul(self.value(a), self.value(b), m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` for `a: [m×k]`, `b: [n×k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::shape("matmul_nt", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![S::zero(); m * n];
        kernels::matmul_nt_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMulNT(a, b), rg))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(
        &mut self,
        x: Var,
        r: Var,
        name: &'static str,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<Var> {
        let (_, cols) = as_matrix(self.shape(x));
        if self.value(r).len() != cols {
            return Err(Error::shape(name, self.shape(x), self.shape(r)));
        }
        let row = self.value(r);
        let out = self
            .value(x)
            .chunks(cols.max(1))
            .flat_map(|chunk| chunk.iter().zip(row).map(|(&a, &b)| f(a, b)))
            .collect();
        let rg = self.rg(&[x, r]);
        Ok(self.push(self.shape(x).to_vec(), out, op, rg))
    }

    /// Adds a length-`cols` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, r: Var) -> Result<Var> {
        self.row_broadcast(x, r, "add_row", |a, b| a + b, Op::AddRow(x, r))
    }

    /// Multiplies every row of `x` elementwise by a length-`cols` vector.
    pub fn mul_row(&mut self, x: Var, r: Var) -> Result<Var> {
        self.row_broadcast(x, r, "mul_row", |a, b| a * b, Op::MulRow(x, r))
    }

    pub fn scale(&mut self, x: Var, c: S) -> Var {
        let out = self.value(x).iter().map(|&v| v * c).collect();
        let rg = self.rg(&[x]);
        self.push(self.shape(x).to_vec(), out, Op::Scale(x, c), rg)
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("concat_rows of nothing".into()))?;
        let cols = as_matrix(self.shape(*first)).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = as_matrix(self.shape(p));
            if c != cols {
                return Err(Error::shape("concat_rows", self.shape(*first), self.shape(p)));
            }
            rows += r;
            out.extend_from_slice(self.value(p));
        }
        let rg = self.rg(parts);
        Ok(self.push(vec![rows, cols], out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("concat_cols of nothing".into()))?;
        let rows = as_matrix(self.shape(*first)).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = as_matrix(self.shape(p));
            if r != rows {
                return Err(Error::shape("concat_cols", self.shape(*first), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(vec![rows, total], out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = as_matrix(self.shape(x));
        if start + len > rows {
            return Err(Error::shape("slice_rows", self.shape(x), &[start, len]));
        }
        let out = self.value(x)[start * cols..(start + len) * cols].to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(vec![len, cols], out, Op::SliceRows(x, start), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = as_matrix(self.shape(x));
        if start + len > cols {
            return Err(Error::shape("slice_cols", self.shape(x), &[start, len]));
        }
        let v = self.value(x);
        let out = (0..rows)
            .flat_map(|i| v[i * cols + start..i * cols + start + len].iter().copied())
            .collect();
        let rg = self.rg(&[x]);
        Ok(self.push(vec![rows, len], out, Op::SliceCols(x, start), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::shape("reshape", self.shape(x), &shape));
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape, out, Op::Reshape(x), rg))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Invalid(format!(
                "softmax axis {axis} out of range for shape {shape:?}"
            )));
        }
        if self.value(x).iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("softmax"));
        }
        let out = kernels::softmax(self.value(x), &shape, axis);
        let rg = self.rg(&[x]);
        Ok(self.push(shape, out, Op::Softmax(x, axis), rg))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| kernels::gelu(v).0).collect();
        let rg = self.rg(&[x]);
        self.push(self.shape(x).to_vec(), out, Op::Gelu(x), rg)
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: S) -> Result<Var> {
        let (rows, cols) = as_matrix(self.shape(x));
        if self.value(gamma).len() != cols || self.value(beta).len() != cols {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let n = S::from_usize(cols).unwrap();
        let xv = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut xhat = Vec::with_capacity(xv.len());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.chunks(cols) {
            let mean = row.iter().copied().sum::<S>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let r = (var + eps).sqrt().recip();
            rstd.push(r);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        let shape = self.shape(x).to_vec();
        Ok(self.push(
            shape,
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Cosine similarity of matching rows of `a` and `b`; zero-norm rows
    /// give 0 with zero gradient.
    pub fn row_cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = as_matrix(self.shape(a));
        let (rb, cb) = as_matrix(self.shape(b));
        if ra != rb || ca != cb {
            return Err(Error::shape("row_cosine", self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .chunks(ca.max(1))
            .zip(self.value(b).chunks(cb.max(1)))
            .map(|(x, y)| cosine(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![ra], out, Op::RowCosine(a, b), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push(Vec::new(), vec![s], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().copied().sum::<S>() / S::from_usize(v.len().max(1)).unwrap();
        let rg = self.rg(&[x]);
        self.push(Vec::new(), vec![s], Op::Mean(x), rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| v * v).collect();
        let rg = self.rg(&[x]);
        self.push(self.shape(x).to_vec(), out, Op::Square(x), rg)
    }

    /// Reverse sweep from a scalar `loss`; returns gradients for every
    /// trainable parameter leaf reached.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params: Vec<Option<Vec<S>>> = (0..self.store.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients(params));
        }
        grads[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    if let Value::Param(id) = node.value {
                        match &mut params[id.0] {
                            Some(acc) => add_into(acc, &g),
                            slot @ None => *slot = Some(g),
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = as_matrix(self.shape(*a));
                    let n = self.shape(*b)[1];
                    if self.requires_grad(*a) {
                        let ga = self.slot(&mut grads, *a);
                        kernels::matmul_nt_acc(&g, self.value(*b), ga, m, n, k);
                    }
                    if self.requires_grad(*b) {
                        let gb = self.slot(&mut grads, *b);
                        kernels::matmul_tn_acc(self.value(*a), &g, gb, m, k, n);
                    }
                }
                Op::MatMulNT(a, b) => {
                    let (m, k) = as_matrix(self.shape(*a));
                    let n = self.shape(*b)[0];
                    if self.requires_grad(*a) {
                        let ga = self.slot(&mut grads, *a);
                        kernels::matmul_acc(&g, self.value(*b), ga, m, n, k);
                    }
                    if self.requires_grad(*b) {
                        let gb = self.slot(&mut grads, *b);
                        kernels::matmul_tn_acc(&g, self.value(*a), gb, m, n, k);
                    }
                }
                Op::Add(a, b) => {
                    if self.requires_grad(*a) {
                        add_into(self.slot(&mut grads, *a), &g);
                    }
                    if self.requires_grad(*b) {
                        add_into(self.slot(&mut grads, *b), &g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.requires_grad(*a) {
                        add_into(self.slot(&mut grads, *a), &g);
                    }
                    if self.requires_grad(*b) {
                        let gb = self.slot(&mut grads, *b);
                        gb.iter_mut().zip(&g).for_each(|(d, &x)| *d = *d - x);
                    }
                }
                Op::Mul(a, b) => {
                    if self.requires_grad(*a) {
                        let bv = self.value(*b);
                        let ga = self.slot(&mut grads, *a);
                        for ((d, &x), &y) in ga.iter_mut().zip(&g).zip(bv) {
                            *d = *d + x * y;
                        }
                    }
                    if self.requires_grad(*b) {
                        let av = self.value(*a);
                        let gb = self.slot(&mut grads, *b);
                        for ((d, &x), &y) in gb.iter_mut().zip(&g).zip(av) {
                            *d = *d + x * y;
                        }
                    }
                }
                Op::AddRow(x, r) => {
                    if self.requires_grad(*x) {
                        add_into(self.slot(&mut grads, *x), &g);
                    }
                    if self.requires_grad(*r) {
                        let cols = self.value(*r).len();
                        let gr = self.slot(&mut grads, *r);
                        for row in g.chunks(cols.max(1)) {
                            add_into(gr, row);
                        }
                    }
                }
                Op::MulRow(x, r) => {
                    let cols = self.value(*r).len();
                    if self.requires_grad(*x) {
                        let rv = self.value(*r);
                        let gx = self.slot(&mut grads, *x);
                        for (drow, grow) in gx.chunks_mut(cols.max(1)).zip(g.chunks(cols.max(1))) {
                            for ((d, &gg), &rr) in drow.iter_mut().zip(grow).zip(rv) {
                                *d = *d + gg * rr;
                            }
                        }
                    }
                    if self.requires_grad(*r) {
                        let xv = self.value(*x);
                        let gr = self.slot(&mut grads, *r);
                        for (grow, xrow) in g.chunks(cols.max(1)).zip(xv.chunks(cols.max(1))) {
                            for ((d, &gg), &xx) in gr.iter_mut().zip(grow).zip(xrow) {
                                *d = *d + gg * xx;
                            }
                        }
                    }
                }
                Op::Scale(x, c) => {
                    if self.requires_grad(*x) {
                        let c = *c;
                        let gx = self.slot(&mut grads, *x);
                        gx.iter_mut().zip(&g).for_each(|(d, &v)| *d = *d + v * c);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        if self.requires_grad(p) {
                            add_into(self.slot(&mut grads, p), &g[offset..offset + len]);
                        }
                        offset += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = node.shape[1];
                    let mut start = 0;
                    for &p in parts {
                        let (rows, w) = as_matrix(self.shape(p));
                        if self.requires_grad(p) {
                            let gp = self.slot(&mut grads, p);
                            for i in 0..rows {
                                add_into(
                                    &mut gp[i * w..(i + 1) * w],
                                    &g[i * total + start..i * total + start + w],
                                );
                            }
                        }
                        start += w;
                    }
                }
                Op::SliceRows(x, start) => {
                    if self.requires_grad(*x) {
                        let cols = node.shape[1];
                        let gx = self.slot(&mut grads, *x);
                        add_into(&mut gx[start * cols..start * cols + g.len()], &g);
                    }
                }
                Op::SliceCols(x, start) => {
                    if self.requires_grad(*x) {
                        let (rows, len) = (node.shape[0], node.shape[1]);
                        let cols = as_matrix(self.shape(*x)).1;
                        let gx = self.slot(&mut grads, *x);
                        for i in 0..rows {
                            let dst = &mut gx[i * cols + start..i * cols + start + len];
                            add_into(dst, &g[i * len..(i + 1) * len]);
                        }
                    }
                }
                Op::Reshape(x) => {
                    if self.requires_grad(*x) {
                        add_into(self.slot(&mut grads, *x), &g);
                    }
                }
                Op::Softmax(x, axis) => {
                    if self.requires_grad(*x) {
                        let y = self.value(Var(i));
                        let (outer, len, inner) = kernels::axis_split(&node.shape, *axis);
                        let gx = self.slot(&mut grads, *x);
                        for o in 0..outer {
                            for k in 0..inner {
                                let idx = |j: usize| (o * len + j) * inner + k;
                                let dot: S = (0..len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                                for j in 0..len {
                                    let t = idx(j);
                                    gx[t] = gx[t] + y[t] * (g[t] - dot);
                                }
                            }
                        }
                    }
                }
                Op::Gelu(x) => {
                    if self.requires_grad(*x) {
                        let xv = self.value(*x);
                        let gx = self.slot(&mut grads, *x);
                        for ((d, &gg), &v) in gx.iter_mut().zip(&g).zip(xv) {
                            *d = *d + gg * kernels::gelu(v).1;
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let cols = as_matrix(&node.shape).1;
                    if self.requires_grad(*gamma) {
                        let gg = self.slot(&mut grads, *gamma);
                        for (grow, hrow) in g.chunks(cols).zip(xhat.chunks(cols)) {
                            for ((d, &a), &h) in gg.iter_mut().zip(grow).zip(hrow) {
                                *d = *d + a * h;
                            }
                        }
                    }
                    if self.requires_grad(*beta) {
                        let gb = self.slot(&mut grads, *beta);
                        for grow in g.chunks(cols) {
                            add_into(gb, grow);
                        }
                    }
                    if self.requires_grad(*x) {
                        let gam = self.value(*gamma);
                        let n = S::from_usize(cols).unwrap();
                        let gx = self.slot(&mut grads, *x);
                        for (r, ((drow, grow), hrow)) in gx
                            .chunks_mut(cols)
                            .zip(g.chunks(cols))
                            .zip(xhat.chunks(cols))
                            .enumerate()
                        {
                            let mut mean_dh = S::zero();
                            let mut mean_dhh = S::zero();
                            for j in 0..cols {
                                let dh = grow[j] * gam[j];
                                mean_dh = mean_dh + dh;
                                mean_dhh = mean_dhh + dh * hrow[j];
                            }
                            mean_dh = mean_dh / n;
                            mean_dhh = mean_dhh / n;
                            for j in 0..cols {
                                let dh = grow[j] * gam[j];
                                drow[j] = drow[j] + rstd[r] * (dh - mean_dh - hrow[j] * mean_dhh);
                            }
                        }
                    }
                }
                Op::RowCosine(a, b) => {
                    let cols = as_matrix(self.shape(*a)).1.max(1);
                    let cosv = self.value(Var(i));
                    let (av, bv) = (self.value(*a), self.value(*b));
                    for (want, this, other) in [(*a, av, bv), (*b, bv, av)] {
                        if !self.requires_grad(want) {
                            continue;
                        }
                        let gw = self.slot(&mut grads, want);
                        for (r, (drow, (xr, yr))) in gw
                            .chunks_mut(cols)
                            .zip(this.chunks(cols).zip(other.chunks(cols)))
                            .enumerate()
                        {
                            let (nx, ny) = (norm(xr), norm(yr));
                            if nx == S::zero() || ny == S::zero() {
                                continue;
                            }
                            let c = cosv[r];
                            for j in 0..cols {
                                let d = yr[j] / (nx * ny) - c * xr[j] / (nx * nx);
                                drow[j] = drow[j] + g[r] * d;
                            }
                        }
                    }
                }
                Op::Sum(x) => {
                    if self.requires_grad(*x) {
                        let gx = self.slot(&mut grads, *x);
                        gx.iter_mut().for_each(|d| *d = *d + g[0]);
                    }
                }
                Op::Mean(x) => {
                    if self.requires_grad(*x) {
                        let n = S::from_usize(self.value(*x).len().max(1)).unwrap();
                        let gx = self.slot(&mut grads, *x);
                        gx.iter_mut().for_each(|d| *d = *d + g[0] / n);
                    }
                }
                Op::Square(x) => {
                    if self.requires_grad(*x) {
                        let xv = self.value(*x);
                        let two = S::lit(2.0);
                        let gx = self.slot(&mut grads, *x);
                        for ((d, &gg), &v) in gx.iter_mut().zip(&g).zip(xv) {
                            *d = *d + two * v * gg;
                        }
                    }
                }
            }
        }
        Ok(Gradients(params))
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<S>>], v: Var) -> &'g mut Vec<S> {
        let len = self.value(v).len();
        grads[v.0].get_or_insert_with(|| vec![S::zero(); len])
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

fn norm<S: Scalar>(x: &[S]) -> S {
    x.iter().map(|&v| v * v).sum::<S>().sqrt()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine<S: Scalar>(x: &[S], y: &[S]) -> S {
    let (nx, ny) = (norm(x), norm(y));
    if nx == S::zero() || ny == S::zero() {
        return S::zero();
    }
    let dot: S = x.iter().zip(y).map(|(&a, &b)| a * b).sum();
    dot / (nx * ny)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(name: &str, t: Tensor<f64>) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add(name, t);
        (s, id)
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let (store, id) = store_with("x", Tensor::from_fn([2, 3], |i| i as f64));
        let mut g = Graph::new(&store);
        let x = g.param(id);
        let loss = g.sum(x);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(id).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn grad_of_dot_self_is_twice_x() {
        let (store, id) = store_with("x", Tensor::new([1, 3], vec![0.5, -1.0, 2.0]).unwrap());
        let mut g = Graph::new(&store);
        let x = g.param(id);
        let xt = g.param(id);
        let xt = g.reshape(xt, [3, 1]).unwrap();
        let loss = g.matmul(x, xt).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(id).unwrap(), &[1.0, -2.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let (store, id) = store_with("x", Tensor::zeros([2]));
        let mut g = Graph::new(&store);
        let x = g.param(id);
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn frozen_param_gets_no_gradient() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::full([2], 1.0));
        let b = store.add("b", Tensor::full([2], 2.0));
        store.set_frozen(a, true);
        let mut g = Graph::new(&store);
        let (va, vb) = (g.param(a), g.param(b));
        let p = g.mul(va, vb).unwrap();
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(a).is_none());
        assert_eq!(grads.get(b).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn row_cosine_degenerate_is_zero() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::new([2, 2], vec![0.0, 0.0, 1.0, 0.0]).unwrap());
        let mut g = Graph::new(&store);
        let va = g.param(a);
        let b = g.constant([2, 2], vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        let c = g.row_cosine(va, b).unwrap();
        assert_eq!(g.value(c), &[0.0, 1.0]);
        let loss = g.sum(c);
        let grads = g.backward(loss).unwrap();
        assert_eq!(&grads.get(a).unwrap()[..2], &[0.0, 0.0]);
    }

    /// Central differences over every entry of every parameter.
    fn fd_check(store: &mut ParamStore<f64>, f: impl Fn(&mut Graph<f64>) -> Var) -> f64 {
        let grads = {
            let mut g = Graph::new(store);
            let loss = f(&mut g);
            g.backward(loss).unwrap()
        };
        let eval = |s: &ParamStore<f64>| {
            let mut g = Graph::new(s);
            let l = f(&mut g);
            g.value(l)[0]
        };
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            for k in 0..store.get(id).numel() {
                let orig = store.get(id).data()[k];
                store.get_mut(id).data_mut()[k] = orig + h;
                let up = eval(store);
                store.get_mut(id).data_mut()[k] = orig - h;
                let down = eval(store);
                store.get_mut(id).data_mut()[k] = orig;
                let num = (up - down) / (2.0 * h);
                let ana = grads.get(id).unwrap()[k];
                let err = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        worst
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::randn([3, 4], 1.0, &mut rng));
        let w = store.add("w", Tensor::randn([4, 4], 0.5, &mut rng));
        let k = store.add("k", Tensor::randn([5, 4], 0.5, &mut rng));
        let gam = store.add("gam", Tensor::randn([4], 1.0, &mut rng));
        let bet = store.add("bet", Tensor::randn([4], 1.0, &mut rng));
        let err = fd_check(&mut store, |g| {
            let (x, w, k) = (g.param(x), g.param(w), g.param(k));
            let (gam, bet) = (g.param(gam), g.param(bet));
            let h = g.layer_norm(x, gam, bet, 1e-5).unwrap();
            let h = g.matmul(h, w).unwrap();
            let h = g.gelu(h);
            let top = g.slice_rows(k, 0, 2).unwrap();
            let keys = g.concat_rows(&[top, h]).unwrap();
            let s = g.matmul_nt(h, keys).unwrap();
            let s = g.scale(s, 0.5);
            let a = g.softmax(s, 1).unwrap();
            let left = g.slice_cols(a, 0, 2).unwrap();
            let right = g.slice_cols(a, 2, 3).unwrap();
            let joined = g.concat_cols(&[right, left]).unwrap();
            let o = g.matmul(joined, keys).unwrap();
            let o = g.mul_row(o, gam).unwrap();
            let o = g.add_row(o, bet).unwrap();
            let c = g.row_cosine(o, x).unwrap();
            let sq = g.square(o);
            let m = g.mean(sq);
            let s = g.sum(c);
            let mr = g.reshape(m, [1]).unwrap();
            let sr = g.reshape(s, [1]).unwrap();
            let both = g.sub(mr, sr).unwrap();
            g.sum(both)
        });
        assert!(err < 1e-6, "max relative error {err}");
    }
}
