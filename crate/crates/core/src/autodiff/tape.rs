//! Reverse-mode differentiation over a write-once tape.
//!
//! Every node holds a dense matrix value; scalars are 1x1. Nodes are appended
//! in evaluation order, so the tape index order is a topological order and
//! [`Tape::backward`] is a single reverse sweep.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
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
    Div(Var, Var),
    Neg(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Max2(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Gather {
        src: Var,
        index: Rc<[Option<usize>]>,
    },
    GatherRows {
        src: Var,
        rows: Rc<[usize]>,
    },
    SegmentSum {
        src: Var,
        seg: Rc<[usize]>,
    },
    SegmentMax {
        src: Var,
        argmax: Vec<Option<usize>>,
    },
    SegmentSoftmax {
        src: Var,
        seg: Rc<[usize]>,
    },
    ConcatCols(Vec<Var>),
    RowNorm(Var),
    SafeRecip(Var, f64),
    SpMM {
        x: Var,
        triplets: Rc<[(usize, usize, f64)]>,
    },
    SegmentAttention {
        q: Var,
        k: Var,
        v: Var,
        offsets: Rc<[usize]>,
        probs: Vec<f64>,
        scale: f64,
    },
    SoftStepCount {
        src: Var,
        seg: Rc<[usize]>,
        weights: Option<Rc<[f64]>>,
        thresholds: Rc<[f64]>,
        sharpness: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<DenseMatrix>>,
}

/// Logistic function, branching on sign so large |x| never overflows.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn shape_err(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
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

    /// Differentiable input.
    pub fn leaf(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(DenseMatrix::scalar(value))
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node (first entry otherwise).
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient; zeros if none reached this node.
    pub fn grad(&self, v: Var) -> DenseMatrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shape(v);
                DenseMatrix::zeros(r, c)
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(value, op, rg)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va, vb));
        }
        let data = va.as_slice().iter().zip(vb.as_slice()).map(|(&x, &y)| f(x, y)).collect();
        let value = DenseMatrix::from_vec(va.rows(), va.cols(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    /// Elementwise maximum; on ties the gradient goes to `a`.
    pub fn max2(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("max2", a, b, Op::Max2(a, b), |x, y| if x >= y { x } else { y })
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), stable_sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, Op::Scale(a, factor), |x| factor * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).clone().reshaped(rows, cols)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Sum of all entries, 1x1.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().sum();
        let rg = self.rg(&[a]);
        self.push(DenseMatrix::scalar(s), Op::Sum(a), rg)
    }

    /// Mean of all entries, 1x1. Errors on an empty operand.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(Error::Empty("mean of empty tensor"));
        }
        let m = v.as_slice().iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(&[a]);
        Ok(self.push(DenseMatrix::scalar(m), Op::Mean(a), rg))
    }

    /// Column sums: r x c -> 1 x c.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = DenseMatrix::zeros(1, v.cols());
        for r in 0..v.rows() {
            for (o, x) in out.as_mut_slice().iter_mut().zip(v.row(r)) {
                *o += x;
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SumRows(a), rg)
    }

    /// Row sums: r x c -> r x 1.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = (0..v.rows()).map(|r| v.row(r).iter().sum()).collect();
        let out = DenseMatrix::from_vec(v.rows(), 1, data).expect("column");
        let rg = self.rg(&[a]);
        self.push(out, Op::SumCols(a), rg)
    }

    /// `a (r x c) + row (1 x c)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err("add_row", va, vr));
        }
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(vr.as_slice()) {
                *o += b;
            }
        }
        let rg = self.rg(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// `a (r x c)` with row `i` scaled by `col[i]` (`col` is r x 1).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (va, vc) = (self.value(a), self.value(col));
        if vc.cols() != 1 || vc.rows() != va.rows() {
            return Err(shape_err("mul_col", va, vc));
        }
        let mut out = va.clone();
        for r in 0..out.rows() {
            let s = vc.as_slice()[r];
            out.row_mut(r).iter_mut().for_each(|o| *o *= s);
        }
        let rg = self.rg(&[a, col]);
        Ok(self.push(out, Op::MulCol(a, col), rg))
    }

    /// Row-wise softmax via the max-shifted exponential.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows_value(self.value(a));
        let rg = self.rg(&[a]);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    /// Row-wise log-softmax via log-sum-exp.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = v.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::LogSoftmaxRows(a), rg)
    }

    /// Flat gather into a `rows x cols` result; `None` entries are zero.
    pub fn gather(
        &mut self,
        src: Var,
        index: Rc<[Option<usize>]>,
        rows: usize,
        cols: usize,
    ) -> Result<Var> {
        let vs = self.value(src);
        if index.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: index.len(),
                context: "gather index length",
            });
        }
        let mut data = Vec::with_capacity(index.len());
        for i in index.iter() {
            match *i {
                Some(j) if j < vs.len() => data.push(vs.as_slice()[j]),
                Some(j) => {
                    return Err(Error::NodeOutOfRange {
                        index: j,
                        num_nodes: vs.len(),
                    })
                }
                None => data.push(0.0),
            }
        }
        let out = DenseMatrix::from_vec(rows, cols, data)?;
        let rg = self.rg(&[src]);
        Ok(self.push(out, Op::Gather { src, index }, rg))
    }

    /// Selects (and possibly repeats) rows.
    pub fn gather_rows(&mut self, src: Var, rows: Rc<[usize]>) -> Result<Var> {
        let vs = self.value(src);
        let cols = vs.cols();
        let mut out = DenseMatrix::zeros(rows.len(), cols);
        for (o, &r) in rows.iter().enumerate() {
            if r >= vs.rows() {
                return Err(Error::NodeOutOfRange {
                    index: r,
                    num_nodes: vs.rows(),
                });
            }
            out.row_mut(o).copy_from_slice(vs.row(r));
        }
        let rg = self.rg(&[src]);
        Ok(self.push(out, Op::GatherRows { src, rows }, rg))
    }

    /// Sums rows sharing a segment id into `segments` output rows.
    pub fn segment_sum(&mut self, src: Var, seg: Rc<[usize]>, segments: usize) -> Result<Var> {
        let vs = self.value(src);
        check_segments(vs.rows(), &seg, segments)?;
        let cols = vs.cols();
        let (offsets, rows) = group_by_segment(&seg, segments);
        let mut out = DenseMatrix::zeros(segments, cols);
        let mut buf = Vec::new();
        for s in 0..segments {
            let members = &rows[offsets[s]..offsets[s + 1]];
            for c in 0..cols {
                buf.clear();
                buf.extend(members.iter().map(|&r| vs.as_slice()[r * cols + c]));
                out[(s, c)] = ordered_sum(&mut buf);
            }
        }
        let rg = self.rg(&[src]);
        Ok(self.push(out, Op::SegmentSum { src, seg }, rg))
    }

    /// Columnwise maximum within each segment. Ties resolve to the earliest
    /// row; empty segments yield zero.
    pub fn segment_max(&mut self, src: Var, seg: &[usize], segments: usize) -> Result<Var> {
        let vs = self.value(src);
        check_segments(vs.rows(), seg, segments)?;
        let cols = vs.cols();
        let mut argmax: Vec<Option<usize>> = vec![None; segments * cols];
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let slot = &mut argmax[s * cols + c];
                let x = vs.as_slice()[r * cols + c];
                match *slot {
                    Some(j) if vs.as_slice()[j] >= x => {}
                    _ => *slot = Some(r * cols + c),
                }
            }
        }
        let data = argmax
            .iter()
            .map(|a| a.map_or(0.0, |j| vs.as_slice()[j]))
            .collect();
        let out = DenseMatrix::from_vec(segments, cols, data)?;
        let rg = self.rg(&[src]);
        Ok(self.push(out, Op::SegmentMax { src, argmax }, rg))
    }

    /// Softmax of a column vector taken separately within each segment.
    pub fn segment_softmax(&mut self, src: Var, seg: Rc<[usize]>, segments: usize) -> Result<Var> {
        let vs = self.value(src);
        if vs.cols() != 1 {
            return Err(shape_err("segment_softmax", vs, vs));
        }
        check_segments(vs.rows(), &seg, segments)?;
        let x = vs.as_slice();
        let mut max = vec![f64::NEG_INFINITY; segments];
        for (r, &s) in seg.iter().enumerate() {
            max[s] = max[s].max(x[r]);
        }
        let mut e: Vec<f64> = seg.iter().enumerate().map(|(r, &s)| (x[r] - max[s]).exp()).collect();
        let (offsets, rows) = group_by_segment(&seg, segments);
        let mut buf = Vec::new();
        let denom: Vec<f64> = (0..segments)
            .map(|s| {
                buf.clear();
                buf.extend(rows[offsets[s]..offsets[s + 1]].iter().map(|&r| e[r]));
                ordered_sum(&mut buf)
            })
            .collect();
        for (r, &s) in seg.iter().enumerate() {
            e[r] /= denom[s];
        }
        let out = DenseMatrix::from_vec(e.len(), 1, e)?;
        let rg = self.rg(&[src]);
        Ok(self.push(out, Op::SegmentSoftmax { src, seg }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat_cols of nothing"))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for p in parts {
            let v = self.value(*p);
            if v.rows() != rows {
                return Err(shape_err("concat_cols", self.value(*first), v));
            }
            cols += v.cols();
        }
        let mut out = DenseMatrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for p in parts {
                let v = self.value(*p);
                out.row_mut(r)[offset..offset + v.cols()].copy_from_slice(v.row(r));
                offset += v.cols();
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Euclidean norm of each row, r x 1. The gradient at a zero row is zero.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = (0..v.rows())
            .map(|r| v.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let out = DenseMatrix::from_vec(v.rows(), 1, data).expect("column");
        let rg = self.rg(&[a]);
        self.push(out, Op::RowNorm(a), rg)
    }

    /// `1/x`, or 0 where `|x| <= eps`.
    pub fn safe_recip(&mut self, a: Var, eps: f64) -> Var {
        self.unary(a, Op::SafeRecip(a, eps), |x| if x.abs() > eps { 1.0 / x } else { 0.0 })
    }

    /// Sparse-times-dense product with a constant sparse operator given as
    /// `(row, col, weight)` triplets; the result has `rows` rows.
    pub fn spmm(
        &mut self,
        triplets: Rc<[(usize, usize, f64)]>,
        rows: usize,
        x: Var,
    ) -> Result<Var> {
        let vx = self.value(x);
        let cols = vx.cols();
        let mut out = DenseMatrix::zeros(rows, cols);
        if let Some(&(r, c, _)) = triplets.iter().find(|t| t.0 >= rows || t.1 >= vx.rows()) {
            return Err(Error::NodeOutOfRange {
                index: r.max(c),
                num_nodes: rows.min(vx.rows()),
            });
        }
        let target: Vec<usize> = triplets.iter().map(|t| t.0).collect();
        let (offsets, members) = group_by_segment(&target, rows);
        let mut buf = Vec::new();
        for r in 0..rows {
            let entries = &members[offsets[r]..offsets[r + 1]];
            for col in 0..cols {
                buf.clear();
                buf.extend(entries.iter().map(|&t| {
                    let (_, c, w) = triplets[t];
                    w * vx.as_slice()[c * cols + col]
                }));
                out[(r, col)] = ordered_sum(&mut buf);
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::SpMM { x, triplets }, rg))
    }

    /// Scaled dot-product self-attention restricted to blocks of consecutive
    /// rows: rows `offsets[g]..offsets[g+1]` attend only to each other.
    pub fn segment_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        offsets: Rc<[usize]>,
    ) -> Result<Var> {
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        if vq.shape() != vk.shape() {
            return Err(shape_err("segment_attention q/k", vq, vk));
        }
        if vv.rows() != vq.rows() {
            return Err(shape_err("segment_attention v", vq, vv));
        }
        if offsets.first() != Some(&0)
            || offsets.last() != Some(&vq.rows())
            || offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidArgument(
                "attention offsets must run from 0 to the row count".into(),
            ));
        }
        let dk = vq.cols();
        let dv = vv.cols();
        let scale = 1.0 / (dk.max(1) as f64).sqrt();
        let mut out = DenseMatrix::zeros(vq.rows(), dv);
        let mut probs = Vec::new();
        for w in offsets.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let n = hi - lo;
            let mut p = vec![0.0; n * n];
            for i in 0..n {
                let qi = vq.row(lo + i);
                for j in 0..n {
                    let kj = vk.row(lo + j);
                    p[i * n + j] = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                }
                softmax_in_place(&mut p[i * n..(i + 1) * n]);
            }
            let mut buf = Vec::with_capacity(n);
            for i in 0..n {
                for c in 0..dv {
                    buf.clear();
                    buf.extend((0..n).map(|j| p[i * n + j] * vv[(lo + j, c)]));
                    out[(lo + i, c)] = ordered_sum(&mut buf);
                }
            }
            probs.extend_from_slice(&p);
        }
        let rg = self.rg(&[q, k, v]);
        Ok(self.push(
            out,
            Op::SegmentAttention {
                q,
                k,
                v,
                offsets,
                probs,
                scale,
            },
            rg,
        ))
    }

    /// Smoothed sublevel counts. `src` is r x a; the result is
    /// `segments x (a * thresholds.len())` with
    /// `out[s, i*T + j] = sum over rows r in segment s of sigmoid(sharpness * (t_j - src[r, i]))`.
    pub fn soft_step_count(
        &mut self,
        src: Var,
        seg: Rc<[usize]>,
        segments: usize,
        thresholds: Rc<[f64]>,
        sharpness: f64,
    ) -> Result<Var> {
        self.step_count(src, seg, None, segments, thresholds, sharpness)
    }

    /// As [`Tape::soft_step_count`] with each sigmoid scaled by the constant
    /// `weights[r, i]` (row-major, same shape as `src`). Zero-weight terms
    /// are skipped, so the output does not depend on those entries at all.
    pub fn weighted_soft_step_count(
        &mut self,
        src: Var,
        seg: Rc<[usize]>,
        weights: Rc<[f64]>,
        segments: usize,
        thresholds: Rc<[f64]>,
        sharpness: f64,
    ) -> Result<Var> {
        let len = self.value(src).len();
        if weights.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: weights.len(),
                context: "step-count weights",
            });
        }
        self.step_count(src, seg, Some(weights), segments, thresholds, sharpness)
    }

    fn step_count(
        &mut self,
        src: Var,
        seg: Rc<[usize]>,
        weights: Option<Rc<[f64]>>,
        segments: usize,
        thresholds: Rc<[f64]>,
        sharpness: f64,
    ) -> Result<Var> {
        let vs = self.value(src);
        check_segments(vs.rows(), &seg, segments)?;
        let a = vs.cols();
        let nt = thresholds.len();
        let mut out = DenseMatrix::zeros(segments, a * nt);
        let (offsets, rows) = group_by_segment(&seg, segments);
        let weight = |k: usize| weights.as_ref().map_or(1.0, |w| w[k]);
        let mut buf = Vec::new();
        for s in 0..segments {
            let members = &rows[offsets[s]..offsets[s + 1]];
            let orow = out.row_mut(s);
            for i in 0..a {
                for (j, &t) in thresholds.iter().enumerate() {
                    buf.clear();
                    buf.extend(members.iter().filter(|&&r| weight(r * a + i) != 0.0).map(|&r| {
                        weight(r * a + i) * stable_sigmoid(sharpness * (t - vs.as_slice()[r * a + i]))
                    }));
                    orow[i * nt + j] = ordered_sum(&mut buf);
                }
            }
        }
        let rg = self.rg(&[src]);
        Ok(self.push(
            out,
            Op::SoftStepCount {
                src,
                seg,
                weights,
                thresholds,
                sharpness,
            },
            rg,
        ))
    }

    /// Hash of every branch taken while recording: ReLU signs, max winners
    /// and step-count weights. Two evaluations with equal signatures lie on
    /// the same smooth piece, so finite differences between them do not
    /// straddle a kink.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Relu(a) | Op::LeakyRelu(a, _) => {
                    i.hash(&mut h);
                    for &x in self.value(*a).as_slice() {
                        (x > 0.0).hash(&mut h);
                    }
                }
                Op::Max2(a, b) => {
                    i.hash(&mut h);
                    for (x, y) in self.value(*a).as_slice().iter().zip(self.value(*b).as_slice()) {
                        (x >= y).hash(&mut h);
                    }
                }
                Op::SegmentMax { argmax, .. } => {
                    i.hash(&mut h);
                    argmax.hash(&mut h);
                }
                Op::SoftStepCount {
                    weights: Some(weights), ..
                } => {
                    i.hash(&mut h);
                    for w in weights.iter() {
                        w.to_bits().hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar output. Gradients add onto whatever is
    /// already stored, so repeated calls accumulate until [`Tape::zero_grad`].
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let shape = self.shape(output);
        if shape != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward (output must be 1x1)",
                lhs: shape,
                rhs: (1, 1),
            });
        }
        let mut adj: Vec<Option<DenseMatrix>> = vec![None; output.0 + 1];
        adj[output.0] = Some(DenseMatrix::scalar(1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g, &mut adj);
            }
            match &mut self.grads[i] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &DenseMatrix, adj: &mut [Option<DenseMatrix>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, delta: DenseMatrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(a) => a.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let zip = |a: &DenseMatrix, b: &DenseMatrix, f: &dyn Fn(f64, f64) -> f64| {
            let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
            DenseMatrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, zip(g, val(*b), &|g, y| g * y));
                acc(*b, zip(g, val(*a), &|g, x| g * x));
            }
            Op::Div(a, b) => {
                acc(*a, zip(g, val(*b), &|g, y| g / y));
                let gb = zip(&zip(g, out, &|g, q| g * q), val(*b), &|gq, y| -gq / y);
                acc(*b, gb);
            }
            Op::Neg(a) => acc(*a, g.map(|x| -x)),
            Op::Exp(a) => acc(*a, zip(g, out, &|g, y| g * y)),
            Op::Log(a) => acc(*a, zip(g, val(*a), &|g, x| g / x)),
            Op::Tanh(a) => acc(*a, zip(g, out, &|g, y| g * (1.0 - y * y))),
            Op::Sigmoid(a) => acc(*a, zip(g, out, &|g, y| g * y * (1.0 - y))),
            Op::Relu(a) => acc(*a, zip(g, val(*a), &|g, x| if x > 0.0 { g } else { 0.0 })),
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                acc(*a, zip(g, val(*a), &|g, x| if x > 0.0 { g } else { s * g }));
            }
            Op::Max2(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let mask = zip(va, vb, &|x, y| if x >= y { 1.0 } else { 0.0 });
                acc(*a, zip(g, &mask, &|g, m| g * m));
                acc(*b, zip(g, &mask, &|g, m| g * (1.0 - m)));
            }
            Op::Scale(a, f) => {
                let f = *f;
                acc(*a, g.map(|x| f * x));
            }
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if self.nodes[a.0].requires_grad {
                    acc(*a, g.matmul(&vb.transpose()).expect("shapes"));
                }
                if self.nodes[b.0].requires_grad {
                    acc(*b, va.transpose().matmul(g).expect("shapes"));
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Reshape(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, g.clone().reshaped(r, c).expect("reshape"));
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, DenseMatrix::filled(r, c, g.as_slice()[0]));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, DenseMatrix::filled(r, c, g.as_slice()[0] / (r * c) as f64));
            }
            Op::SumRows(a) => {
                let (r, c) = val(*a).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for row in 0..r {
                    d.row_mut(row).copy_from_slice(g.as_slice());
                }
                acc(*a, d);
            }
            Op::SumCols(a) => {
                let (r, c) = val(*a).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for row in 0..r {
                    d.row_mut(row).fill(g.as_slice()[row]);
                }
                acc(*a, d);
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let mut d = DenseMatrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, x) in d.as_mut_slice().iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                acc(*row, d);
            }
            Op::MulCol(a, col) => {
                let (va, vc) = (val(*a), val(*col));
                let mut da = g.clone();
                let mut dc = DenseMatrix::zeros(vc.rows(), 1);
                for r in 0..g.rows() {
                    let s = vc.as_slice()[r];
                    dc.as_mut_slice()[r] = g.row(r).iter().zip(va.row(r)).map(|(x, y)| x * y).sum();
                    da.row_mut(r).iter_mut().for_each(|x| *x *= s);
                }
                acc(*a, da);
                acc(*col, dc);
            }
            Op::SoftmaxRows(a) => {
                let mut d = g.clone();
                for r in 0..d.rows() {
                    let y = out.row(r);
                    let dot: f64 = g.row(r).iter().zip(y).map(|(g, y)| g * y).sum();
                    for (dx, (&gi, &yi)) in d.row_mut(r).iter_mut().zip(g.row(r).iter().zip(y)) {
                        *dx = yi * (gi - dot);
                    }
                }
                acc(*a, d);
            }
            Op::LogSoftmaxRows(a) => {
                let mut d = g.clone();
                for r in 0..d.rows() {
                    let total: f64 = g.row(r).iter().sum();
                    for (dx, (&gi, &ly)) in d.row_mut(r).iter_mut().zip(g.row(r).iter().zip(out.row(r))) {
                        *dx = gi - ly.exp() * total;
                    }
                }
                acc(*a, d);
            }
            Op::Gather { src, index } => {
                let (r, c) = val(*src).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for (gi, idx) in g.as_slice().iter().zip(index.iter()) {
                    if let Some(j) = idx {
                        d.as_mut_slice()[*j] += gi;
                    }
                }
                acc(*src, d);
            }
            Op::GatherRows { src, rows } => {
                let (r, c) = val(*src).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for (o, &sr) in rows.iter().enumerate() {
                    for (x, gi) in d.row_mut(sr).iter_mut().zip(g.row(o)) {
                        *x += gi;
                    }
                }
                acc(*src, d);
            }
            Op::SegmentSum { src, seg } => {
                let (r, c) = val(*src).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for (row, &s) in seg.iter().enumerate() {
                    d.row_mut(row).copy_from_slice(g.row(s));
                }
                acc(*src, d);
            }
            Op::SegmentMax { src, argmax } => {
                let (r, c) = val(*src).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for (gi, am) in g.as_slice().iter().zip(argmax) {
                    if let Some(j) = am {
                        d.as_mut_slice()[*j] += gi;
                    }
                }
                acc(*src, d);
            }
            Op::SegmentSoftmax { src, seg } => {
                let y = out.as_slice();
                let gs = g.as_slice();
                let segments = seg.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; segments];
                for (r, &s) in seg.iter().enumerate() {
                    dot[s] += gs[r] * y[r];
                }
                let data = seg.iter().enumerate().map(|(r, &s)| y[r] * (gs[r] - dot[s])).collect();
                acc(*src, DenseMatrix::from_vec(y.len(), 1, data).expect("column"));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let c = val(*p).cols();
                    let mut d = DenseMatrix::zeros(g.rows(), c);
                    for r in 0..g.rows() {
                        d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + c]);
                    }
                    offset += c;
                    acc(*p, d);
                }
            }
            Op::RowNorm(a) => {
                let va = val(*a);
                let mut d = va.clone();
                for r in 0..d.rows() {
                    let n = out.as_slice()[r];
                    let f = if n > 0.0 { g.as_slice()[r] / n } else { 0.0 };
                    d.row_mut(r).iter_mut().for_each(|x| *x *= f);
                }
                acc(*a, d);
            }
            Op::SafeRecip(a, eps) => {
                let eps = *eps;
                acc(*a, zip(g, val(*a), &|g, x| if x.abs() > eps { -g / (x * x) } else { 0.0 }));
            }
            Op::SpMM { x, triplets } => {
                let (r, c) = val(*x).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for &(row, col, w) in triplets.iter() {
                    for (o, gi) in d.row_mut(col).iter_mut().zip(g.row(row)) {
                        *o += w * gi;
                    }
                }
                acc(*x, d);
            }
            Op::SegmentAttention {
                q,
                k,
                v,
                offsets,
                probs,
                scale,
            } => {
                let (vq, vk, vv) = (val(*q), val(*k), val(*v));
                let (dk, dv) = (vq.cols(), vv.cols());
                let mut dq = DenseMatrix::zeros(vq.rows(), dk);
                let mut dkm = DenseMatrix::zeros(vk.rows(), dk);
                let mut dvm = DenseMatrix::zeros(vv.rows(), dv);
                let mut p_off = 0;
                for w in offsets.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    let n = hi - lo;
                    let p = &probs[p_off..p_off + n * n];
                    p_off += n * n;
                    for i in 0..n {
                        let gi = g.row(lo + i);
                        // dP[i, j] = <dO_i, V_j>
                        let dp: Vec<f64> = (0..n)
                            .map(|j| gi.iter().zip(vv.row(lo + j)).map(|(a, b)| a * b).sum())
                            .collect();
                        let pi = &p[i * n..(i + 1) * n];
                        let dot: f64 = dp.iter().zip(pi).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            let pij = pi[j];
                            // dV_j += P_ij dO_i
                            for (o, x) in dvm.row_mut(lo + j).iter_mut().zip(gi) {
                                *o += pij * x;
                            }
                            let ds = pij * (dp[j] - dot) * scale;
                            if ds == 0.0 {
                                continue;
                            }
                            for (o, x) in dq.row_mut(lo + i).iter_mut().zip(vk.row(lo + j)) {
                                *o += ds * x;
                            }
                            for (o, x) in dkm.row_mut(lo + j).iter_mut().zip(vq.row(lo + i)) {
                                *o += ds * x;
                            }
                        }
                    }
                }
                acc(*q, dq);
                acc(*k, dkm);
                acc(*v, dvm);
            }
            Op::SoftStepCount {
                src,
                seg,
                weights,
                thresholds,
                sharpness,
            } => {
                let vs = val(*src);
                let a = vs.cols();
                let nt = thresholds.len();
                let mut d = DenseMatrix::zeros(vs.rows(), vs.cols());
                for (r, &s) in seg.iter().enumerate() {
                    let grow = g.row(s);
                    let prow = vs.row(r);
                    let drow = d.row_mut(r);
                    for (i, &p) in prow.iter().enumerate() {
                        let w = weights.as_ref().map_or(1.0, |w| w[r * a + i]);
                        if w == 0.0 {
                            continue;
                        }
                        let mut total = 0.0;
                        for (j, &t) in thresholds.iter().enumerate() {
                            let y = stable_sigmoid(sharpness * (t - p));
                            total += grow[i * nt + j] * y * (1.0 - y);
                        }
                        drow[i] = -sharpness * w * total;
                    }
                }
                acc(*src, d);
            }
        }
    }
}

fn check_segments(rows: usize, seg: &[usize], segments: usize) -> Result<()> {
    if seg.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: seg.len(),
            context: "segment ids vs rows",
        });
    }
    if let Some(&bad) = seg.iter().find(|&&s| s >= segments) {
        return Err(Error::NodeOutOfRange {
            index: bad,
            num_nodes: segments,
        });
    }
    Ok(())
}

/// Sum whose result does not depend on the order of the addends: they are
/// sorted before accumulation. Segment reductions use this so that
/// relabeling nodes permutes outputs bit for bit.
pub(crate) fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().fold(0.0, |acc, x| acc + x)
}

/// Rows grouped by segment: rows of segment `s` are
/// `rows[offsets[s]..offsets[s + 1]]`, in ascending order.
fn group_by_segment(seg: &[usize], segments: usize) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0usize; segments + 1];
    for &s in seg {
        offsets[s + 1] += 1;
    }
    for s in 0..segments {
        offsets[s + 1] += offsets[s];
    }
    let mut fill = offsets.clone();
    let mut rows = vec![0usize; seg.len()];
    for (r, &s) in seg.iter().enumerate() {
        rows[fill[s]] = r;
        fill[s] += 1;
    }
    (offsets, rows)
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for x in row.iter_mut() {
        *x = (*x - m).exp();
    }
    let total = ordered_sum(&mut row.to_vec());
    row.iter_mut().for_each(|x| *x /= total);
}

fn softmax_rows_value(v: &DenseMatrix) -> DenseMatrix {
    let mut out = v.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}
