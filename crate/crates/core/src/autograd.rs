//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! borrowed from a flat slice and referenced by index, so a single tape can
//! be differentiated with respect to all of them by [`Tape::backward`].

use alloc::vec::Vec;

use crate::tensor::{Matrix, Real};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, PartialEq)]
pub enum Mask {
    None,
    /// Row `i` attends to columns `0..=i`.
    Causal,
    /// Per-column keep flag applied to every row.
    Columns(Vec<bool>),
}

#[derive(Debug)]
enum Op<F> {
    Const,
    Param(usize),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, F),
    Gelu(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Matrix<F>, inv_std: Vec<F> },
    Softmax(Var),
    Gather { table: Var, idx: Vec<usize> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    MeanRows(Var),
    Nll { logits: Var, probs: Matrix<F>, picks: Vec<(usize, usize, F)> },
    WeightedSum(Vec<(Var, F)>),
}

struct Node<F> {
    value: Option<Matrix<F>>,
    op: Op<F>,
}

pub struct Tape<'p, F: Real> {
    params: &'p [Matrix<F>],
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node<F>>,
}

const LN_EPS: f64 = 1e-5;

impl<'p, F: Real> Tape<'p, F> {
    pub fn new(params: &'p [Matrix<F>]) -> Self {
        Tape { params, param_vars: alloc::vec![None; params.len()], nodes: Vec::new() }
    }

    fn push(&mut self, value: Matrix<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<F> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(i)) => &self.params[*i],
            _ => unreachable!("node without value"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, m: Matrix<F>) -> Var {
        self.push(m, Op::Const)
    }

    /// Leaf for parameter `index`; repeated calls return the same node.
    pub fn param(&mut self, index: usize) -> Var {
        if let Some(v) = self.param_vars[index] {
            return v;
        }
        self.nodes.push(Node { value: None, op: Op::Param(index) });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[index] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1×n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.rows(), 1, "add_row expects a row vector");
        assert_eq!(bias.cols(), self.value(a).cols(), "add_row width mismatch");
        let mut v = self.value(a).clone();
        let bias = self.value(b).data().to_vec();
        for r in 0..v.rows() {
            for (x, &y) in v.row_mut(r).iter_mut().zip(&bias) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let mut v = self.value(a).clone();
        v.scale(s);
        self.push(v, Op::Scale(a, s))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| gelu(x).0);
        self.push(v, Op::Gelu(a))
    }

    /// Row-wise layer normalization with gain and bias rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let n = F::of(cols as f64);
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let is = F::one() / (var + F::of(LN_EPS)).sqrt();
            for (o, &v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut out = xhat.clone();
        for r in 0..rows {
            for ((o, &gg), &bb) in out.row_mut(r).iter_mut().zip(g).zip(b) {
                *o = *o * gg + bb;
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    /// Row-wise softmax; masked positions get probability zero.
    pub fn softmax(&mut self, a: Var, mask: &Mask) -> Var {
        let v = softmax_rows(self.value(a), mask);
        self.push(v, Op::Softmax(a))
    }

    /// Rows of `table` selected by `idx`.
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros(idx.len(), t.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(i));
        }
        self.push(out, Op::Gather { table, idx: idx.to_vec() })
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols(), cols, "concat_rows width mismatch");
            rows += m.rows();
            data.extend_from_slice(m.data());
        }
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat_cols height mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + m.cols()].copy_from_slice(m.row(r));
            }
            off += m.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        let cols = m.cols();
        let data = m.data()[start * cols..(start + len) * cols].to_vec();
        self.push(Matrix::from_vec(len, cols, data), Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        let mut out = Matrix::zeros(m.rows(), len);
        for r in 0..m.rows() {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    /// Column means as a `1×n` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let inv = F::one() / F::of(m.rows() as f64);
        let mut out = Matrix::zeros(1, m.cols());
        for r in 0..m.rows() {
            for (o, &x) in out.data_mut().iter_mut().zip(m.row(r)) {
                *o += x * inv;
            }
        }
        self.push(out, Op::MeanRows(a))
    }

    /// Weighted negative log-likelihood `Σ w · −log softmax(logits[row])[col]`
    /// as a `1×1` value. The column mask is applied to every row.
    pub fn nll(&mut self, logits: Var, picks: &[(usize, usize, F)], mask: &Mask) -> Var {
        let probs = softmax_rows(self.value(logits), mask);
        let mut total = F::zero();
        for &(r, c, w) in picks {
            total += -w * probs.get(r, c).ln();
        }
        self.push(Matrix::from_vec(1, 1, alloc::vec![total]), Op::Nll { logits, probs, picks: picks.to_vec() })
    }

    /// `Σ wᵢ · xᵢ` over `1×1` values.
    pub fn weighted_sum(&mut self, terms: &[(Var, F)]) -> Var {
        let mut total = F::zero();
        for &(v, w) in terms {
            total += w * self.value(v).get(0, 0);
        }
        self.push(Matrix::from_vec(1, 1, alloc::vec![total]), Op::WeightedSum(terms.to_vec()))
    }

    pub fn scalar(&self, v: Var) -> F {
        self.value(v).get(0, 0)
    }

    /// Back-propagates from the `1×1` node `loss` and returns the gradient of
    /// every parameter used on this tape (`None` for unused parameters).
    pub fn backward(&self, loss: Var) -> Vec<Option<Matrix<F>>> {
        let mut grads: Vec<Option<Matrix<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, F::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Param(_) => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_bt(self.value(*b));
                    let db = self.value(*a).matmul_at(&g);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatMulBt(a, b) => {
                    let da = g.matmul(self.value(*b));
                    let db = g.matmul_at(self.value(*a));
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, b) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &x) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *b, db);
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, s) => {
                    let mut da = g;
                    da.scale(*s);
                    acc(&mut grads, *a, da);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut da = g;
                    for (d, &xv) in da.data_mut().iter_mut().zip(x.data()) {
                        *d *= gelu(xv).1;
                    }
                    acc(&mut grads, *a, da);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let gv = self.value(*gain).data();
                    let (rows, cols) = g.shape();
                    let n = F::of(cols as f64);
                    let mut dgain = Matrix::zeros(1, cols);
                    let mut dbias = Matrix::zeros(1, cols);
                    let mut dx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let gr = g.row(r);
                        let xr = xhat.row(r);
                        let mut sum_d = F::zero();
                        let mut sum_dx = F::zero();
                        for c in 0..cols {
                            dgain.data_mut()[c] += gr[c] * xr[c];
                            dbias.data_mut()[c] += gr[c];
                            let d = gr[c] * gv[c];
                            sum_d += d;
                            sum_dx += d * xr[c];
                        }
                        let k = inv_std[r] / n;
                        let out = dx.row_mut(r);
                        for c in 0..cols {
                            let d = gr[c] * gv[c];
                            out[c] = k * (n * d - sum_d - xr[c] * sum_dx);
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gain, dgain);
                    acc(&mut grads, *bias, dbias);
                }
                Op::Softmax(a) => {
                    let y = self.nodes[i].value.as_ref().expect("softmax value");
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: F = yr.iter().zip(gr).map(|(&p, &d)| p * d).sum();
                        for ((o, &p), &d) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = p * (d - dot);
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::Gather { table, idx } => {
                    let t = self.value(*table);
                    let mut dt = Matrix::zeros(t.rows(), t.cols());
                    for (r, &ti) in idx.iter().enumerate() {
                        for (o, &x) in dt.row_mut(ti).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *table, dt);
                }
                Op::ConcatRows(parts) => {
                    let cols = g.cols();
                    let mut off = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        let d = Matrix::from_vec(rows, cols, g.data()[off * cols..(off + rows) * cols].to_vec());
                        off += rows;
                        acc(&mut grads, p, d);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        let mut d = Matrix::zeros(g.rows(), c);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + c]);
                        }
                        off += c;
                        acc(&mut grads, p, d);
                    }
                }
                Op::SliceRows(a, start) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    let cols = src.cols();
                    d.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                    acc(&mut grads, *a, d);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..g.rows() {
                        d.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, d);
                }
                Op::MeanRows(a) => {
                    let src = self.value(*a);
                    let inv = F::one() / F::of(src.rows() as f64);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        for (o, &x) in d.row_mut(r).iter_mut().zip(g.data()) {
                            *o = x * inv;
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Nll { logits, probs, picks } => {
                    let up = g.get(0, 0);
                    let mut d = Matrix::zeros(probs.rows(), probs.cols());
                    for &(r, c, w) in picks {
                        let scale = w * up;
                        for (o, &p) in d.row_mut(r).iter_mut().zip(probs.row(r)) {
                            *o += scale * p;
                        }
                        let cur = d.get(r, c);
                        d.set(r, c, cur - scale);
                    }
                    acc(&mut grads, *logits, d);
                }
                Op::WeightedSum(terms) => {
                    let up = g.get(0, 0);
                    for &(v, w) in terms {
                        acc(&mut grads, v, Matrix::filled(1, 1, w * up));
                    }
                }
            }
        }
        self.param_vars
            .iter()
            .map(|v| v.and_then(|v| grads[v.0].take()))
            .collect()
    }
}

fn acc<F: Real>(grads: &mut [Option<Matrix<F>>], v: Var, g: Matrix<F>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// GELU value and derivative (tanh approximation).
fn gelu<F: Real>(x: F) -> (F, F) {
    let c = F::of(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = F::of(0.044_715);
    let half = F::of(0.5);
    let inner = c * (x + k * x * x * x);
    let t = inner.tanh();
    let value = half * x * (F::one() + t);
    let dinner = c * (F::one() + F::of(3.0) * k * x * x);
    let deriv = half * (F::one() + t) + half * x * (F::one() - t * t) * dinner;
    (value, deriv)
}

pub fn softmax_rows<F: Real>(m: &Matrix<F>, mask: &Mask) -> Matrix<F> {
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let keep = |c: usize| match mask {
            Mask::None => true,
            Mask::Causal => c <= r,
            Mask::Columns(k) => k[c],
        };
        let row = m.row(r);
        let mut max = F::neg_infinity();
        for (c, &v) in row.iter().enumerate() {
            if keep(c) && v > max {
                max = v;
            }
        }
        if max == F::neg_infinity() {
            continue;
        }
        let o = out.row_mut(r);
        let mut sum = F::zero();
        for (c, &v) in row.iter().enumerate() {
            if keep(c) {
                let e = (v - max).exp();
                o[c] = e;
                sum += e;
            }
        }
        for x in o.iter_mut() {
            *x = *x / sum;
        }
    }
    out
}
