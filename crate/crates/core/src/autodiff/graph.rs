//! Recorded computation tape with reverse-mode gradients.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameter leaves borrow
//! their values from the [`ParamStore`]; everything else is owned by the tape.
//! [`Graph::backward`] walks the tape in reverse and returns gradients for the
//! parameters only.

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;
use super::AutodiffError;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(usize),
    MatMul(usize, usize),
    MatMulBt(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Exp(usize),
    Square(usize),
    SumAll(usize),
    SumRows(usize),
    SumCols(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    GatherRows(usize, Vec<usize>),
    Reshape(usize),
    SoftmaxRows(usize),
    LogSoftmaxMasked(usize, Vec<bool>),
    Pick(usize, Vec<usize>),
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
}

struct Node {
    /// `None` for parameter leaves, whose value lives in the store.
    value: Option<Tensor>,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<usize>>,
}

type Res = Result<Var, AutodiffError>;

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, left: a.shape(), right: b.shape() }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::with_capacity(256), param_nodes: vec![None; params.len()] }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(pid)) => self.params.value(ParamId(*pid)),
            _ => unreachable!("non-parameter node without value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(n) = self.param_nodes[id.0] {
            return Var(n);
        }
        self.nodes.push(Node { value: None, op: Op::Param(id.0) });
        let n = self.nodes.len() - 1;
        self.param_nodes[id.0] = Some(n);
        Var(n)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Res {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta, tb));
        }
        let out = ta.matmul(tb);
        Ok(self.push(out, Op::MatMul(a.0, b.0)))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Res {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(mismatch("matmul_bt", ta, tb));
        }
        let out = ta.matmul_bt(tb);
        Ok(self.push(out, Op::MatMulBt(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a.0))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Res {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a.0, b.0)))
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Res {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(mismatch("add_row", ta, tr));
        }
        let mut out = ta.clone();
        let c = ta.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tr.data()[i % c];
        }
        Ok(self.push(out, Op::AddRow(a.0, row.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Res {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Res {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a.0, b.0)))
    }

    /// Multiplies row `i` of `a` by `col[i]` (`col` is `r × 1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Res {
        let (ta, tc) = (self.value(a), self.value(col));
        if tc.cols() != 1 || tc.rows() != ta.rows() {
            return Err(mismatch("mul_col", ta, tc));
        }
        let mut out = ta.clone();
        let c = ta.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= tc.data()[i / c];
        }
        Ok(self.push(out, Op::MulCol(a.0, col.0)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a.0, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        self.push(out, Op::AddScalar(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a.0))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::SumAll(a.0))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum over rows: `r × c → 1 × c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let mut out = Tensor::zeros(1, ta.cols());
        for r in 0..ta.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(ta.row_slice(r)) {
                *o += v;
            }
        }
        self.push(out, Op::SumRows(a.0))
    }

    /// Mean over rows: `r × c → 1 × c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.value(a).rows().max(1) as f64;
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum over columns: `r × c → r × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = (0..ta.rows()).map(|r| ta.row_slice(r).iter().sum()).collect();
        let out = Tensor::from_vec(ta.rows(), 1, data).expect("shape");
        self.push(out, Op::SumCols(a.0))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Res {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), t));
            }
            cols += t.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..rows {
                for c in 0..t.cols() {
                    out.set(r, off + c, t.get(r, c));
                }
            }
            off += t.cols();
        }
        Ok(self.push(out, Op::ConcatCols(parts.iter().map(|v| v.0).collect())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Res {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(mismatch("concat_rows", self.value(parts[0]), t));
            }
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.iter().map(|v| v.0).collect())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Res {
        let ta = self.value(a);
        if start + len > ta.cols() {
            return Err(AutodiffError::OutOfRange { op: "slice_cols", index: start + len, bound: ta.cols() });
        }
        let mut out = Tensor::zeros(ta.rows(), len);
        for r in 0..ta.rows() {
            for c in 0..len {
                out.set(r, c, ta.get(r, start + c));
            }
        }
        Ok(self.push(out, Op::SliceCols(a.0, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Res {
        let ta = self.value(a);
        if start + len > ta.rows() {
            return Err(AutodiffError::OutOfRange { op: "slice_rows", index: start + len, bound: ta.rows() });
        }
        let c = ta.cols();
        let out = Tensor::from_vec(len, c, ta.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(out, Op::SliceRows(a.0, start)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Res {
        let ta = self.value(a);
        let c = ta.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= ta.rows() {
                return Err(AutodiffError::OutOfRange { op: "gather_rows", index: i, bound: ta.rows() });
            }
            data.extend_from_slice(ta.row_slice(i));
        }
        let out = Tensor::from_vec(idx.len(), c, data)?;
        Ok(self.push(out, Op::GatherRows(a.0, idx.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Res {
        let ta = self.value(a);
        if ta.len() != rows * cols {
            return Err(AutodiffError::ShapeMismatch { op: "reshape", left: ta.shape(), right: [rows, cols] });
        }
        let out = ta.clone().reshaped(rows, cols);
        Ok(self.push(out, Op::Reshape(a.0)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let mut out = ta.clone();
        let c = ta.cols();
        for row in out.data_mut().chunks_mut(c) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        self.push(out, Op::SoftmaxRows(a.0))
    }

    /// Row-wise log-softmax restricted to `allowed` entries (row-major mask).
    /// Disallowed entries carry value 0 and receive no gradient; their
    /// probability is exactly zero.
    pub fn log_softmax_masked(&mut self, a: Var, allowed: &[bool]) -> Res {
        let ta = self.value(a);
        if allowed.len() != ta.len() {
            return Err(AutodiffError::ShapeMismatch { op: "log_softmax_masked", left: ta.shape(), right: [allowed.len(), 1] });
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for (r, row) in out.data_mut().chunks_mut(c).enumerate() {
            let mask = &allowed[r * c..(r + 1) * c];
            let m = row
                .iter()
                .zip(mask)
                .filter(|(_, &ok)| ok)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return Err(AutodiffError::AllMasked { row: r });
            }
            let lse = m + row
                .iter()
                .zip(mask)
                .filter(|(_, &ok)| ok)
                .map(|(&v, _)| (v - m).exp())
                .sum::<f64>()
                .ln();
            for (v, &ok) in row.iter_mut().zip(mask) {
                *v = if ok { *v - lse } else { 0.0 };
            }
        }
        Ok(self.push(out, Op::LogSoftmaxMasked(a.0, allowed.to_vec())))
    }

    /// Picks column `idx[r]` from each row: `r × c → r × 1`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Res {
        let ta = self.value(a);
        if idx.len() != ta.rows() {
            return Err(AutodiffError::ShapeMismatch { op: "pick", left: ta.shape(), right: [idx.len(), 1] });
        }
        let mut data = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            if i >= ta.cols() {
                return Err(AutodiffError::OutOfRange { op: "pick", index: i, bound: ta.cols() });
            }
            data.push(ta.get(r, i));
        }
        let out = Tensor::from_vec(idx.len(), 1, data)?;
        Ok(self.push(out, Op::Pick(a.0, idx.to_vec())))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a.0, lo, hi))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Res {
        self.same_shape("minimum", a, b)?;
        let out = self.value(a).zip_map(self.value(b), f64::min);
        Ok(self.push(out, Op::Minimum(a.0, b.0)))
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Result<Grads, AutodiffError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(AutodiffError::NonScalarLoss { shape: lt.shape() });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Grads::zeros_like(self.params);

        fn acc(slot: &mut Option<Tensor>, g: Tensor) {
            match slot {
                Some(t) => t.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for n in (0..=loss.0).rev() {
            let Some(dy) = grads[n].take() else { continue };
            let node = &self.nodes[n];
            match &node.op {
                Op::Const => {}
                Op::Param(pid) => out.add(ParamId(*pid), &dy),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(Var(*a)), self.value(Var(*b)));
                    let da = dy.matmul_bt(tb);
                    let db = ta.matmul_at(&dy);
                    acc(&mut grads[*a], da);
                    acc(&mut grads[*b], db);
                }
                Op::MatMulBt(a, b) => {
                    let (ta, tb) = (self.value(Var(*a)), self.value(Var(*b)));
                    let da = dy.matmul(tb);
                    let db = dy.matmul_at(ta);
                    acc(&mut grads[*a], da);
                    acc(&mut grads[*b], db);
                }
                Op::Transpose(a) => acc(&mut grads[*a], dy.transpose()),
                Op::Add(a, b) => {
                    acc(&mut grads[*b], dy.clone());
                    acc(&mut grads[*a], dy);
                }
                Op::AddRow(a, r) => {
                    let c = dy.cols();
                    let mut dr = Tensor::zeros(1, c);
                    for (i, v) in dy.data().iter().enumerate() {
                        dr.data_mut()[i % c] += v;
                    }
                    acc(&mut grads[*r], dr);
                    acc(&mut grads[*a], dy);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads[*b], dy.map(|v| -v));
                    acc(&mut grads[*a], dy);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(Var(*a)), self.value(Var(*b)));
                    acc(&mut grads[*a], dy.zip_map(tb, |g, y| g * y));
                    acc(&mut grads[*b], dy.zip_map(ta, |g, x| g * x));
                }
                Op::MulCol(a, col) => {
                    let (ta, tc) = (self.value(Var(*a)), self.value(Var(*col)));
                    let c = ta.cols();
                    let mut da = dy.clone();
                    let mut dc = Tensor::zeros(tc.rows(), 1);
                    for (i, v) in da.data_mut().iter_mut().enumerate() {
                        dc.data_mut()[i / c] += *v * ta.data()[i];
                        *v *= tc.data()[i / c];
                    }
                    acc(&mut grads[*a], da);
                    acc(&mut grads[*col], dc);
                }
                Op::Scale(a, s) => acc(&mut grads[*a], dy.map(|v| v * s)),
                Op::AddScalar(a) => acc(&mut grads[*a], dy),
                Op::Tanh(a) => {
                    let y = node.value.as_ref().expect("value");
                    acc(&mut grads[*a], dy.zip_map(y, |g, y| g * (1.0 - y * y)));
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("value");
                    acc(&mut grads[*a], dy.zip_map(y, |g, y| g * y * (1.0 - y)));
                }
                Op::Relu(a) => {
                    let x = self.value(Var(*a));
                    acc(&mut grads[*a], dy.zip_map(x, |g, x| if x > 0.0 { g } else { 0.0 }));
                }
                Op::Exp(a) => {
                    let y = node.value.as_ref().expect("value");
                    acc(&mut grads[*a], dy.zip_map(y, |g, y| g * y));
                }
                Op::Square(a) => {
                    let x = self.value(Var(*a));
                    acc(&mut grads[*a], dy.zip_map(x, |g, x| 2.0 * g * x));
                }
                Op::SumAll(a) => {
                    let s = self.value(Var(*a)).shape();
                    acc(&mut grads[*a], Tensor::filled(s[0], s[1], dy.item()));
                }
                Op::SumRows(a) => {
                    let s = self.value(Var(*a)).shape();
                    let mut da = Tensor::zeros(s[0], s[1]);
                    for r in 0..s[0] {
                        for c in 0..s[1] {
                            da.set(r, c, dy.get(0, c));
                        }
                    }
                    acc(&mut grads[*a], da);
                }
                Op::SumCols(a) => {
                    let s = self.value(Var(*a)).shape();
                    let mut da = Tensor::zeros(s[0], s[1]);
                    for r in 0..s[0] {
                        for c in 0..s[1] {
                            da.set(r, c, dy.get(r, 0));
                        }
                    }
                    acc(&mut grads[*a], da);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let s = self.value(Var(p)).shape();
                        let mut dp = Tensor::zeros(s[0], s[1]);
                        for r in 0..s[0] {
                            for c in 0..s[1] {
                                dp.set(r, c, dy.get(r, off + c));
                            }
                        }
                        off += s[1];
                        acc(&mut grads[p], dp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let s = self.value(Var(p)).shape();
                        let c = s[1];
                        let dp = Tensor::from_vec(s[0], c, dy.data()[off * c..(off + s[0]) * c].to_vec())?;
                        off += s[0];
                        acc(&mut grads[p], dp);
                    }
                }
                Op::SliceCols(a, start) => {
                    let s = self.value(Var(*a)).shape();
                    let mut da = Tensor::zeros(s[0], s[1]);
                    for r in 0..dy.rows() {
                        for c in 0..dy.cols() {
                            da.set(r, start + c, dy.get(r, c));
                        }
                    }
                    acc(&mut grads[*a], da);
                }
                Op::SliceRows(a, start) => {
                    let s = self.value(Var(*a)).shape();
                    let mut da = Tensor::zeros(s[0], s[1]);
                    let c = s[1];
                    da.data_mut()[start * c..start * c + dy.len()].copy_from_slice(dy.data());
                    acc(&mut grads[*a], da);
                }
                Op::GatherRows(a, idx) => {
                    let s = self.value(Var(*a)).shape();
                    let mut da = Tensor::zeros(s[0], s[1]);
                    for (r, &i) in idx.iter().enumerate() {
                        for c in 0..s[1] {
                            let v = da.get(i, c) + dy.get(r, c);
                            da.set(i, c, v);
                        }
                    }
                    acc(&mut grads[*a], da);
                }
                Op::Reshape(a) => {
                    let s = self.value(Var(*a)).shape();
                    acc(&mut grads[*a], dy.reshaped(s[0], s[1]));
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().expect("value");
                    let c = y.cols();
                    let mut da = dy.clone();
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let dr = &dy.row_slice(r);
                        let dot: f64 = yr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                        for k in 0..c {
                            da.set(r, k, yr[k] * (dr[k] - dot));
                        }
                    }
                    acc(&mut grads[*a], da);
                }
                Op::LogSoftmaxMasked(a, mask) => {
                    let y = node.value.as_ref().expect("value");
                    let c = y.cols();
                    let mut da = Tensor::zeros(y.rows(), c);
                    for r in 0..y.rows() {
                        let s: f64 = (0..c).filter(|&k| mask[r * c + k]).map(|k| dy.get(r, k)).sum();
                        for k in 0..c {
                            if mask[r * c + k] {
                                da.set(r, k, dy.get(r, k) - y.get(r, k).exp() * s);
                            }
                        }
                    }
                    acc(&mut grads[*a], da);
                }
                Op::Pick(a, idx) => {
                    let s = self.value(Var(*a)).shape();
                    let mut da = Tensor::zeros(s[0], s[1]);
                    for (r, &i) in idx.iter().enumerate() {
                        da.set(r, i, dy.get(r, 0));
                    }
                    acc(&mut grads[*a], da);
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(Var(*a));
                    let (lo, hi) = (*lo, *hi);
                    acc(&mut grads[*a], dy.zip_map(x, |g, x| if x >= lo && x <= hi { g } else { 0.0 }));
                }
                Op::Minimum(a, b) => {
                    let (ta, tb) = (self.value(Var(*a)), self.value(Var(*b)));
                    let mut da = dy.clone();
                    let mut db = dy.clone();
                    for i in 0..dy.len() {
                        if ta.data()[i] <= tb.data()[i] {
                            db.data_mut()[i] = 0.0;
                        } else {
                            da.data_mut()[i] = 0.0;
                        }
                    }
                    acc(&mut grads[*a], da);
                    acc(&mut grads[*b], db);
                }
            }
        }
        Ok(out)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_log_softmax_zeroes_disallowed() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::row(&[1.0, 2.0, 3.0]));
        let y = g.log_softmax_masked(x, &[true, false, true]).unwrap();
        let v = g.value(y).data().to_vec();
        assert_eq!(v[1], 0.0);
        let p0 = v[0].exp();
        let p2 = v[2].exp();
        assert!((p0 + p2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_masked_row_is_an_error() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(g.log_softmax_masked(x, &[false, false]), Err(AutodiffError::AllMasked { row: 0 })));
    }

    #[test]
    fn matmul_shape_mismatch_is_reported() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        assert!(g.matmul(a, b).is_err());
    }
}
