//! Reverse-mode differentiation over a recorded operation list.
//!
//! Every operation evaluates eagerly and appends a node holding its value.
//! [`Tape::backward`] walks the list in reverse and accumulates adjoints.

use std::sync::Arc;

use super::params::{Gradients, ParamStore};
use super::tensor::{matmul_into, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};

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
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `m × n` plus a `1 × n` row broadcast down the rows.
    AddRow(Var, Var),
    MulRow(Var, Var),
    /// `m × n` times an `m × 1` column broadcast across the columns.
    MulCol(Var, Var),
    /// Any shape plus/times a `1 × 1` value.
    AddScalar(Var, Var),
    MulScalar(Var, Var),
    DivScalar(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    RowDot(Var, Var),
    SegmentSoftmax(Var, Arc<[usize]>, usize),
    MeanRows(Var),
    Sum(Var),
    Mean(Var),
    Sigmoid(Var),
    Relu(Var),
    Abs(Var),
    Log(Var),
    Exp(Var),
    Powf(Var, f64),
    Recip(Var),
    Clamp(Var, f64, f64),
    MinAll(Var, usize),
    MaxAll(Var, usize),
    MaskMul(Var, Arc<[f64]>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_same(ctx: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dims(ctx, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input; it receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Records the current value of a named parameter.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let idx = store
            .index_of(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
        Ok(self.push(Op::Param(idx), store.value_at(idx).clone()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(Error::dims("matmul", format!("rhs rows = {}", ta.cols()), tb.rows()));
        }
        let mut out = Tensor::zeros(ta.rows(), tb.cols());
        matmul_into(ta, tb, &mut out);
        Ok(self.push(Op::MatMul(a, b), out))
    }

    fn zip_with(&mut self, ctx: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same(ctx, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data)?;
        Ok(self.push(op, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(&mut self, ctx: &str, a: Var, r: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(r));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(Error::dims(
                ctx,
                format!("[1, {}]", ta.cols()),
                format!("{:?}", tr.shape()),
            ));
        }
        let cols = ta.cols();
        let mut out = ta.clone();
        for row in out.data_mut().chunks_mut(cols.max(1)) {
            for (o, &rv) in row.iter_mut().zip(tr.data()) {
                *o = f(*o, rv);
            }
        }
        Ok(self.push(op, out))
    }

    /// Bias addition: `a` is `m × n`, `bias` is `1 × n`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.row_broadcast("add_row", a, bias, |x, y| x + y, Op::AddRow(a, bias))
    }

    pub fn mul_row(&mut self, a: Var, r: Var) -> Result<Var> {
        self.row_broadcast("mul_row", a, r, |x, y| x * y, Op::MulRow(a, r))
    }

    /// Scales each row `i` of `a` by `c[i]`; `c` is `m × 1`.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(c));
        if tc.cols() != 1 || tc.rows() != ta.rows() {
            return Err(Error::dims(
                "mul_col",
                format!("[{}, 1]", ta.rows()),
                format!("{:?}", tc.shape()),
            ));
        }
        let cols = ta.cols();
        let mut out = ta.clone();
        if cols > 0 {
            for (row, &cv) in out.data_mut().chunks_mut(cols).zip(tc.data()) {
                for o in row {
                    *o *= cv;
                }
            }
        }
        Ok(self.push(Op::MulCol(a, c), out))
    }

    fn scalar_of(&self, ctx: &str, s: Var) -> Result<f64> {
        let t = self.value(s);
        if t.shape() != [1, 1] {
            return Err(Error::dims(ctx, "[1, 1]", format!("{:?}", t.shape())));
        }
        Ok(t.item())
    }

    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.scalar_of("add_scalar", s)?;
        let out = self.value(a).map(|x| x + sv);
        Ok(self.push(Op::AddScalar(a, s), out))
    }

    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.scalar_of("mul_scalar", s)?;
        let out = self.value(a).map(|x| x * sv);
        Ok(self.push(Op::MulScalar(a, s), out))
    }

    /// `a / s` for a 1×1 `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.scalar_of("div_scalar", s)?;
        let out = self.value(a).map(|x| x / sv);
        Ok(self.push(Op::DivScalar(a, s), out))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(Op::Scale(a, factor), out)
    }

    pub fn shift(&mut self, a: Var, offset: f64) -> Var {
        let out = self.value(a).map(|x| x + offset);
        self.push(Op::Shift(a), out)
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dims("concat", "at least one input", 0))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(Error::dims("concat", rows, t.rows()));
            }
            cols += t.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..rows {
                for c in 0..t.cols() {
                    out.set(r, offset + c, t.get(r, c));
                }
            }
            offset += t.cols();
        }
        Ok(self.push(Op::Concat(parts.to_vec()), out))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.cols() {
            return Err(Error::dims("slice_cols", format!("end <= {}", ta.cols()), start + len));
        }
        let mut out = Tensor::zeros(ta.rows(), len);
        for r in 0..ta.rows() {
            for c in 0..len {
                out.set(r, c, ta.get(r, start + c));
            }
        }
        Ok(self.push(Op::SliceCols(a, start), out))
    }

    /// Row `e` of the result is row `index[e]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let ta = self.value(a);
        let cols = ta.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            if i >= ta.rows() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: ta.rows(),
                });
            }
            data.extend_from_slice(ta.row_slice(i));
        }
        let out = Tensor::from_vec(index.len(), cols, data)?;
        Ok(self.push(Op::GatherRows(a, index), out))
    }

    /// Row `index[e]` of the `n`-row result accumulates row `e` of `a`.
    pub fn scatter_add_rows(&mut self, a: Var, index: Arc<[usize]>, n: usize) -> Result<Var> {
        let ta = self.value(a);
        if index.len() != ta.rows() {
            return Err(Error::dims("scatter_add_rows", ta.rows(), index.len()));
        }
        let cols = ta.cols();
        let mut out = Tensor::zeros(n, cols);
        for (e, &i) in index.iter().enumerate() {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            let src = ta.row_slice(e);
            for (o, &v) in out.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                *o += v;
            }
        }
        Ok(self.push(Op::ScatterAddRows(a, index), out))
    }

    /// Per-row dot product of two `m × d` matrices, giving `m × 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same("row_dot", ta, tb)?;
        let data = (0..ta.rows())
            .map(|r| ta.row_slice(r).iter().zip(tb.row_slice(r)).map(|(x, y)| x * y).sum())
            .collect();
        Ok(self.push(Op::RowDot(a, b), Tensor::column(data)))
    }

    /// Softmax of an `m × 1` score column within groups given by `segment`.
    pub fn segment_softmax(&mut self, a: Var, segment: Arc<[usize]>, segments: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.cols() != 1 || ta.rows() != segment.len() {
            return Err(Error::dims(
                "segment_softmax",
                format!("[{}, 1]", segment.len()),
                format!("{:?}", ta.shape()),
            ));
        }
        let mut max = vec![f64::NEG_INFINITY; segments];
        for (&s, &v) in segment.iter().zip(ta.data()) {
            if s >= segments {
                return Err(Error::IndexOutOfRange {
                    index: s,
                    len: segments,
                });
            }
            max[s] = max[s].max(v);
        }
        let mut exps: Vec<f64> = segment
            .iter()
            .zip(ta.data())
            .map(|(&s, &v)| (v - max[s]).exp())
            .collect();
        let mut denom = vec![0.0; segments];
        for (&s, &e) in segment.iter().zip(&exps) {
            denom[s] += e;
        }
        for (e, &s) in exps.iter_mut().zip(segment.iter()) {
            *e /= denom[s];
        }
        Ok(self.push(Op::SegmentSoftmax(a, segment, segments), Tensor::column(exps)))
    }

    /// Column means, `m × n` to `1 × n`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rows() == 0 {
            return Err(Error::dims("mean_rows", "at least one row", 0));
        }
        let mut out = Tensor::zeros(1, ta.cols());
        for r in 0..ta.rows() {
            for (o, &v) in out.data_mut().iter_mut().zip(ta.row_slice(r)) {
                *o += v;
            }
        }
        out.scale_assign(1.0 / ta.rows() as f64);
        Ok(self.push(Op::MeanRows(a), out))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.is_empty() {
            return Err(Error::dims("mean", "non-empty", 0));
        }
        let s = ta.data().iter().sum::<f64>() / ta.len() as f64;
        Ok(self.push(Op::Mean(a), Tensor::scalar(s)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), out)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        self.push(Op::Abs(a), out)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(Op::Log(a), out)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), out)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let out = self.value(a).map(|x| x.powf(p));
        self.push(Op::Powf(a, p), out)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 / x);
        self.push(Op::Recip(a), out)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), out)
    }

    /// Minimum over all entries; the gradient goes to the first minimiser.
    pub fn min_all(&mut self, a: Var) -> Result<Var> {
        let (idx, v) = extreme(self.value(a), |x, best| x < best)?;
        Ok(self.push(Op::MinAll(a, idx), Tensor::scalar(v)))
    }

    /// Maximum over all entries; the gradient goes to the first maximiser.
    pub fn max_all(&mut self, a: Var) -> Result<Var> {
        let (idx, v) = extreme(self.value(a), |x, best| x > best)?;
        Ok(self.push(Op::MaxAll(a, idx), Tensor::scalar(v)))
    }

    /// Elementwise product with a fixed mask (dropout, thresholding).
    pub fn mask_mul(&mut self, a: Var, mask: Arc<[f64]>) -> Result<Var> {
        let ta = self.value(a);
        if mask.len() != ta.len() {
            return Err(Error::dims("mask_mul", ta.len(), mask.len()));
        }
        let data = ta.data().iter().zip(mask.iter()).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data)?;
        Ok(self.push(Op::MaskMul(a, mask), out))
    }

    /// Adjoints of `loss` with respect to every recorded node.
    ///
    /// Entries stay `None` for nodes that do not influence the loss.
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let lt = self.value(loss);
        if lt.shape() != [1, 1] {
            return Err(Error::dims("backward", "[1, 1] loss", format!("{:?}", lt.shape())));
        }
        if !lt.item().is_finite() {
            return Err(Error::NonFiniteLoss(lt.item()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    matmul_nt_acc(&g, tb, slot(&mut grads, *a, ta));
                    matmul_tn_acc(ta, &g, slot(&mut grads, *b, tb));
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, &g).add_assign(&g);
                    slot(&mut grads, *b, &g).add_assign(&g);
                }
                Op::Sub(a, b) => {
                    slot(&mut grads, *a, &g).add_assign(&g);
                    for (o, gv) in slot(&mut grads, *b, &g).data_mut().iter_mut().zip(g.data()) {
                        *o -= gv;
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    acc_zip(slot(&mut grads, *a, ta), &g, tb);
                    acc_zip(slot(&mut grads, *b, tb), &g, ta);
                }
                Op::AddRow(a, r) => {
                    let tr = self.value(*r);
                    slot(&mut grads, *a, &g).add_assign(&g);
                    let gr = slot(&mut grads, *r, tr);
                    for row in 0..g.rows() {
                        for (o, &gv) in gr.data_mut().iter_mut().zip(g.row_slice(row)) {
                            *o += gv;
                        }
                    }
                }
                Op::MulRow(a, r) => {
                    let (ta, tr) = (self.value(*a), self.value(*r));
                    {
                        let ga = slot(&mut grads, *a, ta);
                        let cols = ta.cols();
                        for row in 0..g.rows() {
                            for c in 0..cols {
                                ga.data_mut()[row * cols + c] += g.get(row, c) * tr.data()[c];
                            }
                        }
                    }
                    let gr = slot(&mut grads, *r, tr);
                    for row in 0..g.rows() {
                        for (c, o) in gr.data_mut().iter_mut().enumerate() {
                            *o += g.get(row, c) * ta.get(row, c);
                        }
                    }
                }
                Op::MulCol(a, c) => {
                    let (ta, tc) = (self.value(*a), self.value(*c));
                    let cols = ta.cols();
                    {
                        let ga = slot(&mut grads, *a, ta);
                        for row in 0..g.rows() {
                            let cv = tc.data()[row];
                            for k in 0..cols {
                                ga.data_mut()[row * cols + k] += g.get(row, k) * cv;
                            }
                        }
                    }
                    let gc = slot(&mut grads, *c, tc);
                    for row in 0..g.rows() {
                        let dot: f64 = g.row_slice(row).iter().zip(ta.row_slice(row)).map(|(x, y)| x * y).sum();
                        gc.data_mut()[row] += dot;
                    }
                }
                Op::AddScalar(a, s) => {
                    slot(&mut grads, *a, &g).add_assign(&g);
                    let total: f64 = g.data().iter().sum();
                    slot(&mut grads, *s, self.value(*s)).data_mut()[0] += total;
                }
                Op::MulScalar(a, s) => {
                    let (ta, ts) = (self.value(*a), self.value(*s));
                    let sv = ts.item();
                    for (o, gv) in slot(&mut grads, *a, ta).data_mut().iter_mut().zip(g.data()) {
                        *o += gv * sv;
                    }
                    let dot: f64 = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).sum();
                    slot(&mut grads, *s, ts).data_mut()[0] += dot;
                }
                Op::DivScalar(a, s) => {
                    let (ta, ts) = (self.value(*a), self.value(*s));
                    let sv = ts.item();
                    for (o, gv) in slot(&mut grads, *a, ta).data_mut().iter_mut().zip(g.data()) {
                        *o += gv / sv;
                    }
                    let dot: f64 = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).sum();
                    slot(&mut grads, *s, ts).data_mut()[0] -= dot / (sv * sv);
                }
                Op::Scale(a, f) => {
                    for (o, gv) in slot(&mut grads, *a, &g).data_mut().iter_mut().zip(g.data()) {
                        *o += gv * f;
                    }
                }
                Op::Shift(a) => {
                    slot(&mut grads, *a, &g).add_assign(&g);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let tp = self.value(p);
                        let cols = tp.cols();
                        let gp = slot(&mut grads, p, tp);
                        for r in 0..g.rows() {
                            for c in 0..cols {
                                gp.data_mut()[r * cols + c] += g.get(r, offset + c);
                            }
                        }
                        offset += cols;
                    }
                }
                Op::SliceCols(a, start) => {
                    let ta = self.value(*a);
                    let cols = ta.cols();
                    let ga = slot(&mut grads, *a, ta);
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            ga.data_mut()[r * cols + start + c] += g.get(r, c);
                        }
                    }
                }
                Op::GatherRows(a, index) => {
                    let ta = self.value(*a);
                    let cols = ta.cols();
                    let ga = slot(&mut grads, *a, ta);
                    for (e, &i) in index.iter().enumerate() {
                        for (o, &gv) in ga.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(g.row_slice(e)) {
                            *o += gv;
                        }
                    }
                }
                Op::ScatterAddRows(a, index) => {
                    let ta = self.value(*a);
                    let cols = ta.cols();
                    let ga = slot(&mut grads, *a, ta);
                    for (e, &i) in index.iter().enumerate() {
                        for (o, &gv) in ga.data_mut()[e * cols..(e + 1) * cols].iter_mut().zip(g.row_slice(i)) {
                            *o += gv;
                        }
                    }
                }
                Op::RowDot(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let cols = ta.cols();
                    {
                        let ga = slot(&mut grads, *a, ta);
                        for r in 0..ta.rows() {
                            let gv = g.data()[r];
                            for c in 0..cols {
                                ga.data_mut()[r * cols + c] += gv * tb.get(r, c);
                            }
                        }
                    }
                    let gb = slot(&mut grads, *b, tb);
                    for r in 0..tb.rows() {
                        let gv = g.data()[r];
                        for c in 0..cols {
                            gb.data_mut()[r * cols + c] += gv * ta.get(r, c);
                        }
                    }
                }
                Op::SegmentSoftmax(a, segment, segments) => {
                    let y = &node.value;
                    let mut dot = vec![0.0; *segments];
                    for ((&s, &gv), &yv) in segment.iter().zip(g.data()).zip(y.data()) {
                        dot[s] += gv * yv;
                    }
                    let ga = slot(&mut grads, *a, y);
                    for (e, &s) in segment.iter().enumerate() {
                        ga.data_mut()[e] += y.data()[e] * (g.data()[e] - dot[s]);
                    }
                }
                Op::MeanRows(a) => {
                    let ta = self.value(*a);
                    let inv = 1.0 / ta.rows() as f64;
                    let cols = ta.cols();
                    let ga = slot(&mut grads, *a, ta);
                    for r in 0..ta.rows() {
                        for c in 0..cols {
                            ga.data_mut()[r * cols + c] += g.data()[c] * inv;
                        }
                    }
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    for o in slot(&mut grads, *a, self.value(*a)).data_mut() {
                        *o += gv;
                    }
                }
                Op::Mean(a) => {
                    let ta = self.value(*a);
                    let gv = g.item() / ta.len() as f64;
                    for o in slot(&mut grads, *a, ta).data_mut() {
                        *o += gv;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    unary_acc(&mut grads, *a, &g, y, |_, yv| yv * (1.0 - yv));
                }
                Op::Relu(a) => {
                    let ta = self.value(*a);
                    unary_acc(&mut grads, *a, &g, ta, |x, _| if x > 0.0 { 1.0 } else { 0.0 });
                }
                Op::Abs(a) => {
                    let ta = self.value(*a);
                    unary_acc(&mut grads, *a, &g, ta, |x, _| {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                }
                Op::Log(a) => {
                    let ta = self.value(*a);
                    unary_acc(&mut grads, *a, &g, ta, |x, _| 1.0 / x);
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    unary_acc(&mut grads, *a, &g, y, |_, yv| yv);
                }
                Op::Powf(a, p) => {
                    let ta = self.value(*a);
                    let p = *p;
                    unary_acc(&mut grads, *a, &g, ta, |x, _| p * x.powf(p - 1.0));
                }
                Op::Recip(a) => {
                    let ta = self.value(*a);
                    unary_acc(&mut grads, *a, &g, ta, |x, _| -1.0 / (x * x));
                }
                Op::Clamp(a, lo, hi) => {
                    let ta = self.value(*a);
                    let (lo, hi) = (*lo, *hi);
                    unary_acc(
                        &mut grads,
                        *a,
                        &g,
                        ta,
                        |x, _| if x >= lo && x <= hi { 1.0 } else { 0.0 },
                    );
                }
                Op::MinAll(a, idx) | Op::MaxAll(a, idx) => {
                    let ta = self.value(*a);
                    slot(&mut grads, *a, ta).data_mut()[*idx] += g.item();
                }
                Op::MaskMul(a, mask) => {
                    let ta = self.value(*a);
                    for ((o, gv), m) in slot(&mut grads, *a, ta)
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(mask.iter())
                    {
                        *o += gv * m;
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Backpropagates `loss` and collects per-parameter gradients.
    ///
    /// Parameters absent from the tape get zero gradients.
    pub fn gradients(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        let adjoints = self.backward(loss)?;
        let mut grads = Gradients::zeros_like(store);
        for (node, adj) in self.nodes.iter().zip(&adjoints) {
            if let (Op::Param(idx), Some(g)) = (&node.op, adj) {
                grads.get_mut(*idx).add_assign(g);
            }
        }
        Ok(grads)
    }
}

/// Computes `∂loss/∂p` for every parameter in `store`.
pub fn compute_gradients(tape: &Tape, loss: Var, store: &ParamStore) -> Result<Gradients> {
    tape.gradients(loss, store)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn extreme(t: &Tensor, better: impl Fn(f64, f64) -> bool) -> Result<(usize, f64)> {
    let mut it = t.data().iter().copied().enumerate();
    let (mut bi, mut bv) = it.next().ok_or_else(|| Error::dims("min/max reduce", "non-empty", 0))?;
    for (i, v) in it {
        if better(v, bv) {
            bi = i;
            bv = v;
        }
    }
    Ok((bi, bv))
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, like: &Tensor) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.rows(), like.cols()))
}

fn acc_zip(out: &mut Tensor, g: &Tensor, other: &Tensor) {
    for ((o, gv), ov) in out.data_mut().iter_mut().zip(g.data()).zip(other.data()) {
        *o += gv * ov;
    }
}

fn unary_acc(grads: &mut [Option<Tensor>], a: Var, g: &Tensor, source: &Tensor, deriv: impl Fn(f64, f64) -> f64) {
    let ga = slot(grads, a, source);
    for ((o, gv), &s) in ga.data_mut().iter_mut().zip(g.data()).zip(source.data()) {
        *o += gv * deriv(s, s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::column(vec![1.0, 2.0])).unwrap();
        let mut tape = Tape::new();
        let p = tape.param(&store, "p").unwrap();
        let sq = tape.mul(p, p).unwrap();
        let loss = tape.sum(sq);
        let g = tape.gradients(loss, &store).unwrap();
        assert_eq!(g.get("p").unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(0.0)).unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let s = tape.sigmoid(w);
        let g = tape.gradients(s, &store).unwrap();
        assert!((g.get("w").unwrap().item() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unused_params_get_zero_gradient() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::scalar(3.0)).unwrap();
        store.insert("b", Tensor::column(vec![1.0, 1.0])).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, "a").unwrap();
        let loss = tape.exp(a);
        let g = tape.gradients(loss, &store).unwrap();
        assert_eq!(g.get("b").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_loss_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::scalar(0.0));
        let l = tape.ln(z);
        assert!(matches!(tape.gradients(l, &store), Err(Error::NonFiniteLoss(_))));
    }

    #[test]
    fn segment_softmax_sums_to_one() {
        let mut tape = Tape::new();
        let s = tape.constant(Tensor::column(vec![1.0, 2.0, -3.0, 0.5, 0.5]));
        let seg: Arc<[usize]> = vec![0, 0, 1, 1, 2].into();
        let y = tape.segment_softmax(s, seg.clone(), 3).unwrap();
        let mut sums = [0.0; 3];
        for (&k, &v) in seg.iter().zip(tape.value(y).data()) {
            assert!(v >= 0.0);
            sums[k] += v;
        }
        for s in sums {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(3, 2));
        assert!(tape.add(a, b).is_err());
        let r = tape.constant(Tensor::zeros(1, 2));
        assert!(tape.add_row(a, r).is_err());
    }
}
