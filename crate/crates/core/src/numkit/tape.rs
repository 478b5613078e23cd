//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Operations are evaluated eagerly as they are recorded, so every node's
//! forward value is available immediately. [`Tape::backward`] then sweeps the
//! recorded list in reverse and accumulates gradients for every registered
//! parameter.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::matrix::{sigmoid, Matrix};
use super::sparse::SparsePattern;
use super::NumError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(usize);

impl ValueId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Caller-chosen identifier of a trainable parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Parameter,
    MatMul(ValueId, ValueId),
    Add(ValueId, ValueId),
    Mul(ValueId, ValueId),
    AddRow(ValueId, ValueId),
    ScaleBy(ValueId, ValueId),
    Affine { x: ValueId, scale: f64 },
    ConcatCols(Vec<ValueId>),
    ColumnMean(ValueId),
    RowSum(ValueId),
    Sum(ValueId),
    Sigmoid(ValueId),
    Tanh(ValueId),
    Elu(ValueId),
    LeakyRelu { x: ValueId, slope: f64 },
    Log(ValueId),
    Clamp { x: ValueId, lo: f64, hi: f64 },
    Transpose(ValueId),
    GatherRows { x: ValueId, idx: Arc<[usize]> },
    RowSoftmax(ValueId),
    MaskedRowSoftmax { x: ValueId, pattern: Arc<SparsePattern> },
    PatternMatMul { weights: ValueId, pattern: Arc<SparsePattern>, dense: ValueId },
    RowNormalize { x: ValueId, floor: f64 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Parameter => "parameter",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::ScaleBy(..) => "scale_by",
            Op::Affine { .. } => "affine",
            Op::ConcatCols(..) => "concat_cols",
            Op::ColumnMean(..) => "column_mean",
            Op::RowSum(..) => "row_sum",
            Op::Sum(..) => "sum",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Elu(..) => "elu",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Log(..) => "log",
            Op::Clamp { .. } => "clamp",
            Op::Transpose(..) => "transpose",
            Op::GatherRows { .. } => "gather_rows",
            Op::RowSoftmax(..) => "row_softmax",
            Op::MaskedRowSoftmax { .. } => "masked_row_softmax",
            Op::PatternMatMul { .. } => "pattern_matmul",
            Op::RowNormalize { .. } => "row_normalize",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Gradients of a scalar root with respect to every registered parameter.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Matrix>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Recorded computation. Inputs of every node precede it, so the node list
/// is already in topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, ValueId)>,
}

fn mismatch(op_index: usize, op: &'static str, left: &Matrix, right: &Matrix) -> NumError {
    NumError::ShapeMismatch {
        op_index,
        op,
        left: left.shape(),
        right: right.shape(),
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

    /// Forward value of a recorded node.
    pub fn value(&self, id: ValueId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Same as [`Tape::value`] but checked, for callers holding ids of unknown origin.
    pub fn evaluate(&self, root: ValueId) -> Result<&Matrix, NumError> {
        self.nodes
            .get(root.0)
            .map(|n| &n.value)
            .ok_or(NumError::UnknownValue(root.0))
    }

    fn push(&mut self, op: Op, value: Matrix) -> Result<ValueId, NumError> {
        let index = self.nodes.len();
        if !value.is_finite() {
            return Err(NumError::NonFinite {
                op_index: index,
                op: op.name(),
            });
        }
        self.nodes.push(Node { op, value });
        Ok(ValueId(index))
    }

    fn next_index(&self) -> usize {
        self.nodes.len()
    }

    pub fn constant(&mut self, value: Matrix) -> Result<ValueId, NumError> {
        self.push(Op::Constant, value)
    }

    /// Registers a trainable parameter. Registering the same id twice is an error.
    pub fn param(&mut self, id: ParamId, value: Matrix) -> Result<ValueId, NumError> {
        if self.params.iter().any(|(p, _)| *p == id) {
            return Err(NumError::DuplicateParam(id.0));
        }
        let v = self.push(Op::Parameter, value)?;
        self.params.push((id, v));
        Ok(v)
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, NumError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(mismatch(self.next_index(), "matmul", va, vb));
        }
        let out = va.matmul(vb);
        self.push(Op::MatMul(a, b), out)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, NumError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(self.next_index(), "add", va, vb));
        }
        let out = va.zip_map(vb, |x, y| x + y);
        self.push(Op::Add(a, b), out)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, NumError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(self.next_index(), "mul", va, vb));
        }
        let out = va.zip_map(vb, |x, y| x * y);
        self.push(Op::Mul(a, b), out)
    }

    /// Adds a `1 × cols` row vector to every row of `a`.
    pub fn add_row(&mut self, a: ValueId, row: ValueId) -> Result<ValueId, NumError> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(mismatch(self.next_index(), "add_row", va, vr));
        }
        let mut out = va.clone();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(vr.as_slice()) {
                *o += b;
            }
        }
        self.push(Op::AddRow(a, row), out)
    }

    /// Multiplies `a` by a recorded `1 × 1` value.
    pub fn scale_by(&mut self, scalar: ValueId, a: ValueId) -> Result<ValueId, NumError> {
        let (vs, va) = (self.value(scalar), self.value(a));
        if vs.shape() != (1, 1) {
            return Err(mismatch(self.next_index(), "scale_by", vs, va));
        }
        let out = va.scale(vs.scalar());
        self.push(Op::ScaleBy(scalar, a), out)
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&mut self, x: ValueId, scale: f64, shift: f64) -> Result<ValueId, NumError> {
        let out = self.value(x).map(|v| v * scale + shift);
        self.push(Op::Affine { x, scale }, out)
    }

    pub fn concat_cols(&mut self, parts: &[ValueId]) -> Result<ValueId, NumError> {
        let Some(&first) = parts.first() else {
            return Err(NumError::EmptyInput {
                op_index: self.next_index(),
                op: "concat_cols",
            });
        };
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(mismatch(self.next_index(), "concat_cols", self.value(first), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(i);
                out.row_mut(i)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    /// Mean over rows, `N × d → 1 × d`.
    pub fn column_mean(&mut self, a: ValueId) -> Result<ValueId, NumError> {
        let va = self.value(a);
        if va.rows() == 0 {
            return Err(NumError::EmptyInput {
                op_index: self.next_index(),
                op: "column_mean",
            });
        }
        let out = va.column_mean();
        self.push(Op::ColumnMean(a), out)
    }

    /// Sum across columns, `N × d → N × 1`.
    pub fn row_sum(&mut self, a: ValueId) -> Result<ValueId, NumError> {
        let va = self.value(a);
        let out = Matrix::from_fn(va.rows(), 1, |i, _| va.row(i).iter().sum());
        self.push(Op::RowSum(a), out)
    }

    /// Sum of all entries, `→ 1 × 1`.
    pub fn sum(&mut self, a: ValueId) -> Result<ValueId, NumError> {
        let out = Matrix::filled(1, 1, self.value(a).sum());
        self.push(Op::Sum(a), out)
    }

    pub fn sigmoid(&mut self, a: ValueId) -> Result<ValueId, NumError> {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: ValueId) -> Result<ValueId, NumError> {
        let out = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), out)
    }

    /// ELU with unit scale.
    pub fn elu(&mut self, a: ValueId) -> Result<ValueId, NumError> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(Op::Elu(a), out)
    }

    pub fn leaky_relu(&mut self, x: ValueId, slope: f64) -> Result<ValueId, NumError> {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(Op::LeakyRelu { x, slope }, out)
    }

    pub fn log(&mut self, a: ValueId) -> Result<ValueId, NumError> {
        let out = self.value(a).map(f64::ln);
        self.push(Op::Log(a), out)
    }

    pub fn clamp(&mut self, x: ValueId, lo: f64, hi: f64) -> Result<ValueId, NumError> {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(Op::Clamp { x, lo, hi }, out)
    }

    pub fn transpose(&mut self, a: ValueId) -> Result<ValueId, NumError> {
        let out = self.value(a).transpose();
        self.push(Op::Transpose(a), out)
    }

    /// Selects rows of `x` (repeats allowed).
    pub fn gather_rows(&mut self, x: ValueId, idx: impl Into<Arc<[usize]>>) -> Result<ValueId, NumError> {
        let idx: Arc<[usize]> = idx.into();
        let vx = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= vx.rows()) {
            return Err(NumError::IndexOutOfRange {
                op_index: self.next_index(),
                op: "gather_rows",
                index: bad,
                len: vx.rows(),
            });
        }
        let out = vx.select_rows(&idx);
        self.push(Op::GatherRows { x, idx }, out)
    }

    /// Softmax of each row over all of its columns.
    pub fn row_softmax(&mut self, a: ValueId) -> Result<ValueId, NumError> {
        let va = self.value(a);
        let mut out = va.clone();
        for i in 0..out.rows() {
            softmax_in_place(out.row_mut(i));
        }
        self.push(Op::RowSoftmax(a), out)
    }

    /// Softmax of each pattern row over its stored positions. `x` holds one
    /// logit per stored entry (`nnz × 1`); positions outside the pattern are
    /// structurally zero.
    pub fn masked_row_softmax(&mut self, x: ValueId, pattern: &Arc<SparsePattern>) -> Result<ValueId, NumError> {
        let vx = self.value(x);
        if vx.shape() != (pattern.nnz(), 1) {
            return Err(NumError::PatternMismatch {
                op_index: self.next_index(),
                op: "masked_row_softmax",
                nnz: pattern.nnz(),
                got: vx.shape(),
            });
        }
        let mut out = vx.clone();
        for i in 0..pattern.rows() {
            softmax_in_place(&mut out.as_mut_slice()[pattern.row_range(i)]);
        }
        self.push(
            Op::MaskedRowSoftmax {
                x,
                pattern: Arc::clone(pattern),
            },
            out,
        )
    }

    /// Sparse-times-dense product: `out[p] = Σ_e weights[e] · dense[col(e)]`
    /// over the stored entries `e` of pattern row `p`.
    pub fn pattern_matmul(
        &mut self,
        weights: ValueId,
        pattern: &Arc<SparsePattern>,
        dense: ValueId,
    ) -> Result<ValueId, NumError> {
        let (vw, vd) = (self.value(weights), self.value(dense));
        if vw.shape() != (pattern.nnz(), 1) {
            return Err(NumError::PatternMismatch {
                op_index: self.next_index(),
                op: "pattern_matmul",
                nnz: pattern.nnz(),
                got: vw.shape(),
            });
        }
        if vd.rows() != pattern.cols() {
            return Err(NumError::PatternMismatch {
                op_index: self.next_index(),
                op: "pattern_matmul",
                nnz: pattern.cols(),
                got: vd.shape(),
            });
        }
        let mut out = Matrix::zeros(pattern.rows(), vd.cols());
        let w = vw.as_slice();
        for p in 0..pattern.rows() {
            let range = pattern.row_range(p);
            let out_row = out.row_mut(p);
            for (e, &q) in range.zip(pattern.row(p)) {
                let we = w[e];
                for (o, &v) in out_row.iter_mut().zip(vd.row(q)) {
                    *o += we * v;
                }
            }
        }
        self.push(
            Op::PatternMatMul {
                weights,
                pattern: Arc::clone(pattern),
                dense,
            },
            out,
        )
    }

    /// Divides each row by `max(‖row‖₂, floor)`.
    pub fn row_normalize(&mut self, x: ValueId, floor: f64) -> Result<ValueId, NumError> {
        let mut out = self.value(x).clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let n = super::matrix::norm(row).max(floor);
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        self.push(Op::RowNormalize { x, floor }, out)
    }

    /// Reverse sweep from a scalar root. Every registered parameter gets an
    /// entry; parameters the root does not depend on get zeros.
    pub fn backward(&self, root: ValueId) -> Result<Gradients, NumError> {
        let root_value = self.evaluate(root)?;
        if root_value.shape() != (1, 1) {
            return Err(NumError::NonScalarRoot(root_value.shape()));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Parameter => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.value(*b).transpose());
                    let db = self.value(*a).transpose().matmul(&g);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone());
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::AddRow(a, row) => {
                    let mut drow = Matrix::zeros(1, g.cols());
                    for r in g.row_iter() {
                        for (d, &gv) in drow.as_mut_slice().iter_mut().zip(r) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut adj, *row, drow);
                    accumulate(&mut adj, *a, g);
                }
                Op::ScaleBy(s, a) => {
                    let va = self.value(*a);
                    let ds: f64 = g.as_slice().iter().zip(va.as_slice()).map(|(x, y)| x * y).sum();
                    let da = g.scale(self.value(*s).scalar());
                    accumulate(&mut adj, *s, Matrix::filled(1, 1, ds));
                    accumulate(&mut adj, *a, da);
                }
                Op::Affine { x, scale } => {
                    accumulate(&mut adj, *x, g.scale(*scale));
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let part = Matrix::from_fn(g.rows(), w, |r, c| g[(r, offset + c)]);
                        accumulate(&mut adj, p, part);
                        offset += w;
                    }
                }
                Op::ColumnMean(a) => {
                    let n = self.value(*a).rows();
                    let inv = 1.0 / n as f64;
                    let da = Matrix::from_fn(n, g.cols(), |_, c| g[(0, c)] * inv);
                    accumulate(&mut adj, *a, da);
                }
                Op::RowSum(a) => {
                    let va = self.value(*a);
                    let da = Matrix::from_fn(va.rows(), va.cols(), |r, _| g[(r, 0)]);
                    accumulate(&mut adj, *a, da);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, Matrix::filled(r, c, g.scalar()));
                }
                Op::Sigmoid(a) => {
                    let da = g.zip_map(&node.value, |gv, y| gv * y * (1.0 - y));
                    accumulate(&mut adj, *a, da);
                }
                Op::Tanh(a) => {
                    let da = g.zip_map(&node.value, |gv, y| gv * (1.0 - y * y));
                    accumulate(&mut adj, *a, da);
                }
                Op::Elu(a) => {
                    let x = self.value(*a);
                    let mut da = g;
                    for ((d, &xv), &y) in da.as_mut_slice().iter_mut().zip(x.as_slice()).zip(node.value.as_slice()) {
                        if xv <= 0.0 {
                            *d *= y + 1.0;
                        }
                    }
                    accumulate(&mut adj, *a, da);
                }
                Op::LeakyRelu { x, slope } => {
                    let vx = self.value(*x);
                    let da = g.zip_map(vx, |gv, xv| if xv > 0.0 { gv } else { gv * slope });
                    accumulate(&mut adj, *x, da);
                }
                Op::Log(a) => {
                    let da = g.zip_map(self.value(*a), |gv, x| gv / x);
                    accumulate(&mut adj, *a, da);
                }
                Op::Clamp { x, lo, hi } => {
                    let vx = self.value(*x);
                    let da = g.zip_map(vx, |gv, v| if v >= *lo && v <= *hi { gv } else { 0.0 });
                    accumulate(&mut adj, *x, da);
                }
                Op::Transpose(a) => {
                    accumulate(&mut adj, *a, g.transpose());
                }
                Op::GatherRows { x, idx } => {
                    let vx = self.value(*x);
                    let mut dx = Matrix::zeros(vx.rows(), vx.cols());
                    for (k, &r) in idx.iter().enumerate() {
                        for (d, &gv) in dx.row_mut(r).iter_mut().zip(g.row(k)) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::RowSoftmax(a) => {
                    let mut da = g;
                    for r in 0..da.rows() {
                        softmax_backward(node.value.row(r), da.row_mut(r));
                    }
                    accumulate(&mut adj, *a, da);
                }
                Op::MaskedRowSoftmax { x, pattern } => {
                    let mut dx = g;
                    for r in 0..pattern.rows() {
                        let range = pattern.row_range(r);
                        softmax_backward(&node.value.as_slice()[range.clone()], &mut dx.as_mut_slice()[range]);
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::PatternMatMul { weights, pattern, dense } => {
                    let vw = self.value(*weights);
                    let vd = self.value(*dense);
                    let mut dw = Matrix::zeros(vw.rows(), 1);
                    let mut dd = Matrix::zeros(vd.rows(), vd.cols());
                    for p in 0..pattern.rows() {
                        let gp = g.row(p);
                        for (e, &q) in pattern.row_range(p).zip(pattern.row(p)) {
                            dw.as_mut_slice()[e] = super::matrix::dot(gp, vd.row(q));
                            let we = vw.as_slice()[e];
                            for (d, &gv) in dd.row_mut(q).iter_mut().zip(gp) {
                                *d += we * gv;
                            }
                        }
                    }
                    accumulate(&mut adj, *weights, dw);
                    accumulate(&mut adj, *dense, dd);
                }
                Op::RowNormalize { x, floor } => {
                    let vx = self.value(*x);
                    let mut dx = g;
                    for r in 0..vx.rows() {
                        let n = super::matrix::norm(vx.row(r));
                        let y = node.value.row(r);
                        let gr = dx.row_mut(r);
                        if n > *floor {
                            let proj = super::matrix::dot(y, gr);
                            for (d, &yv) in gr.iter_mut().zip(y) {
                                *d = (*d - yv * proj) / n;
                            }
                        } else {
                            for d in gr.iter_mut() {
                                *d /= floor;
                            }
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
            }
        }

        let mut grads = BTreeMap::new();
        for (pid, vid) in &self.params {
            let g = match adj.get_mut(vid.0).and_then(Option::take) {
                Some(g) => g,
                None => {
                    let (r, c) = self.value(*vid).shape();
                    Matrix::zeros(r, c)
                }
            };
            grads.insert(*pid, g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(adj: &mut [Option<Matrix>], id: ValueId, g: Matrix) {
    match &mut adj[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn softmax_in_place(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// In-place: `g ← y ⊙ (g − ⟨g, y⟩)`.
fn softmax_backward(y: &[f64], g: &mut [f64]) {
    let inner = super::matrix::dot(y, g);
    for (gv, &yv) in g.iter_mut().zip(y) {
        *gv = yv * (*gv - inner);
    }
}
