//! Tape-based reverse-mode differentiation over rank-2 tensors.
//!
//! Every operation appends a node holding its forward value. `backward` walks
//! the tape in reverse and returns gradients for the leaves that were marked
//! trainable; intermediate gradients are dropped once consumed.

use std::collections::HashMap;

use super::tensor::{Real, Tensor};
use crate::error::{shape_err, Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddConst(Var),
    MulConst(Var, Tensor<T>),
    Gelu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var },
    Gather { table: Var, ids: Vec<usize> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    CrossEntropy { logits: Var, targets: Vec<usize> },
    Sum(Var),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    trainable: bool,
}

/// Gradients of the trainable leaves reached by a backward pass.
#[derive(Debug, Default)]
pub struct Gradients<T> {
    grads: HashMap<Var, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(&var)
    }

    /// Gradient for `var`, or zeros shaped like `like` when the loss does not
    /// depend on it.
    pub fn get_or_zeros(&self, var: Var, like: &Tensor<T>) -> Tensor<T> {
        self.grads
            .get(&var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn dims2<T: Real>(t: &Tensor<T>) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Handles above `len`
    /// become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        self.nodes[v.0].trainable
    }

    /// Adds an input or parameter. Only trainable leaves receive gradients.
    pub fn leaf(&mut self, value: Tensor<T>, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: trainable,
            trainable,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            trainable: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(out, Op::MatMulT(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(format!(
                "add: {:?} vs {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let mut out = x.clone();
        out.add_assign(y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.numel() != x.cols() {
            return Err(shape_err(format!(
                "add_row: bias of {} values for width {}",
                b.numel(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        let n = x.cols();
        for r in 0..x.rows() {
            for (o, &bv) in out.data_mut()[r * n..(r + 1) * n].iter_mut().zip(b.data()) {
                *o = *o + bv;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias), &[a, bias]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(format!(
                "mul: {:?} vs {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    /// Adds a constant tensor (e.g. an attention mask).
    pub fn add_const(&mut self, a: Var, c: &Tensor<T>) -> Result<Var> {
        let x = self.value(a);
        if x.shape() != c.shape() {
            return Err(shape_err(format!(
                "add_const: {:?} vs {:?}",
                x.shape(),
                c.shape()
            )));
        }
        let mut out = x.clone();
        out.add_assign(c);
        Ok(self.push(out, Op::AddConst(a), &[a]))
    }

    /// Multiplies elementwise by a constant tensor (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Tensor<T>) -> Result<Var> {
        let x = self.value(a);
        if x.shape() != c.shape() {
            return Err(shape_err(format!(
                "mul_const: {:?} vs {:?}",
                x.shape(),
                c.shape()
            )));
        }
        let data = x.data().iter().zip(c.data()).map(|(&p, &q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::MulConst(a, c), &[a]))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.push(out, Op::Gelu(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(shape_err("softmax over an empty axis"));
        }
        let out = x.softmax(x.rank().max(1) - 1)?;
        Ok(self.push(out, Op::SoftmaxRows(a), &[a]))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(shape_err("log-softmax over an empty axis"));
        }
        let mut out = x.clone();
        for r in 0..x.rows() {
            let ls = super::tensor::log_softmax_slice(x.row(r));
            out.row_mut(r).copy_from_slice(&ls);
        }
        Ok(self.push(out, Op::LogSoftmaxRows(a), &[a]))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.cols();
        if self.value(gain).numel() != n || self.value(bias).numel() != n {
            return Err(shape_err("layer_norm: gain/bias width mismatch"));
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut out = xv.clone();
        for r in 0..xv.rows() {
            let (_, rstd, xhat) = normalize_row(xv.row(r));
            for (j, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = xhat[j] * rstd * g[j] + b[j];
            }
        }
        Ok(self.push(out, Op::LayerNorm { x, gain, bias }, &[x, gain, bias]))
    }

    /// Selects rows of `table` by index.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, cols) = dims2(t);
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    index: id,
                    width: rows,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(vec![ids.len(), cols], data)?;
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(*parts.first().ok_or_else(|| shape_err("concat of nothing"))?).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(shape_err(format!(
                    "concat_rows: width {} vs {}",
                    v.cols(),
                    cols
                )));
            }
            rows += if v.numel() == 0 { 0 } else { v.rows() };
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(*parts.first().ok_or_else(|| shape_err("concat of nothing"))?).rows();
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err("concat_cols: row count mismatch"));
            }
            total += v.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x);
        let (rows, cols) = dims2(v);
        if start + len > rows {
            return Err(shape_err(format!(
                "slice_rows {start}..{} of {rows}",
                start + len
            )));
        }
        let out = Tensor::new(
            vec![len, cols],
            v.data()[start * cols..(start + len) * cols].to_vec(),
        )?;
        Ok(self.push(out, Op::SliceRows { x, start }, &[x]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x);
        let (rows, cols) = dims2(v);
        if start + len > cols {
            return Err(shape_err(format!(
                "slice_cols {start}..{} of {cols}",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&v.row(r)[start..start + len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(out, Op::SliceCols { x, start }, &[x]))
    }

    /// Mean over rows of `-log softmax(row)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let z = self.value(logits);
        let (rows, cols) = dims2(z);
        if rows != targets.len() || rows == 0 {
            return Err(shape_err(format!(
                "cross_entropy: {rows} rows for {} targets",
                targets.len()
            )));
        }
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            if t >= cols {
                return Err(Error::Index {
                    index: t,
                    width: cols,
                });
            }
            total = total - super::tensor::log_softmax_slice(z.row(r))[t];
        }
        let out = Tensor::scalar(total / T::lit(rows as f64));
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            &[logits],
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    /// Reverse-mode pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        let mut result = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if node.trainable {
                if !dy.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of node {idx}")));
                }
                result.grads.insert(Var(idx), dy);
                continue;
            }
            self.propagate(&node.op, &node.value, &dy, &mut grads)?;
        }
        Ok(result)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn accumulate(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(
        &self,
        op: &Op<T>,
        y: &Tensor<T>,
        dy: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    Self::accumulate(grads, *a, dy.matmul(&bv.transpose()?)?);
                }
                if self.wants(*b) {
                    Self::accumulate(grads, *b, av.transpose()?.matmul(dy)?);
                }
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    Self::accumulate(grads, *a, dy.matmul(bv)?);
                }
                if self.wants(*b) {
                    Self::accumulate(grads, *b, dy.transpose()?.matmul(av)?);
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    Self::accumulate(grads, *a, dy.clone());
                }
                if self.wants(*b) {
                    Self::accumulate(grads, *b, dy.clone());
                }
            }
            Op::AddRow(a, bias) => {
                if self.wants(*a) {
                    Self::accumulate(grads, *a, dy.clone());
                }
                if self.wants(*bias) {
                    let bshape = self.value(*bias).shape().to_vec();
                    let n = dy.cols();
                    let mut g = vec![T::zero(); n];
                    for r in 0..dy.rows() {
                        for (acc, &d) in g.iter_mut().zip(dy.row(r)) {
                            *acc = *acc + d;
                        }
                    }
                    Self::accumulate(grads, *bias, Tensor::new(bshape, g)?);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    Self::accumulate(grads, *a, elementwise(dy, bv, |d, q| d * q));
                }
                if self.wants(*b) {
                    Self::accumulate(grads, *b, elementwise(dy, av, |d, p| d * p));
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                Self::accumulate(grads, *a, dy.map(|d| d * s));
            }
            Op::AddConst(a) => Self::accumulate(grads, *a, dy.clone()),
            Op::MulConst(a, c) => Self::accumulate(grads, *a, elementwise(dy, c, |d, q| d * q)),
            Op::Gelu(a) => {
                let x = self.value(*a);
                Self::accumulate(grads, *a, elementwise(dy, x, |d, xv| d * gelu_grad(xv)));
            }
            Op::SoftmaxRows(a) => {
                let mut g = dy.clone();
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let dot: T = yr.iter().zip(dy.row(r)).map(|(&p, &d)| p * d).sum();
                    for (j, o) in g.row_mut(r).iter_mut().enumerate() {
                        *o = yr[j] * (*o - dot);
                    }
                }
                Self::accumulate(grads, *a, g);
            }
            Op::LogSoftmaxRows(a) => {
                let mut g = dy.clone();
                for r in 0..y.rows() {
                    let total: T = dy.row(r).iter().copied().sum();
                    let yr = y.row(r);
                    for (j, o) in g.row_mut(r).iter_mut().enumerate() {
                        *o = *o - yr[j].exp() * total;
                    }
                }
                Self::accumulate(grads, *a, g);
            }
            Op::LayerNorm { x, gain, bias } => {
                let xv = self.value(*x);
                let gv = self.value(*gain).data();
                let n = xv.cols();
                let nf = T::lit(n as f64);
                let mut dx = Tensor::zeros(xv.shape());
                let mut dg = vec![T::zero(); n];
                let mut db = vec![T::zero(); n];
                for r in 0..xv.rows() {
                    let (_, rstd, centered) = normalize_row(xv.row(r));
                    let xhat: Vec<T> = centered.iter().map(|&c| c * rstd).collect();
                    let dyr = dy.row(r);
                    let mut mean_dxhat = T::zero();
                    let mut mean_dxhat_xhat = T::zero();
                    for j in 0..n {
                        dg[j] = dg[j] + dyr[j] * xhat[j];
                        db[j] = db[j] + dyr[j];
                        let dxh = dyr[j] * gv[j];
                        mean_dxhat = mean_dxhat + dxh;
                        mean_dxhat_xhat = mean_dxhat_xhat + dxh * xhat[j];
                    }
                    mean_dxhat = mean_dxhat / nf;
                    mean_dxhat_xhat = mean_dxhat_xhat / nf;
                    for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
                        let dxh = dyr[j] * gv[j];
                        *o = rstd * (dxh - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                    }
                }
                if self.wants(*x) {
                    Self::accumulate(grads, *x, dx);
                }
                if self.wants(*gain) {
                    let shape = self.value(*gain).shape().to_vec();
                    Self::accumulate(grads, *gain, Tensor::new(shape, dg)?);
                }
                if self.wants(*bias) {
                    let shape = self.value(*bias).shape().to_vec();
                    Self::accumulate(grads, *bias, Tensor::new(shape, db)?);
                }
            }
            Op::Gather { table, ids } => {
                let mut g = Tensor::zeros(self.value(*table).shape());
                for (r, &id) in ids.iter().enumerate() {
                    for (o, &d) in g.row_mut(id).iter_mut().zip(dy.row(r)) {
                        *o = *o + d;
                    }
                }
                Self::accumulate(grads, *table, g);
            }
            Op::ConcatRows(parts) => {
                let cols = dy.cols();
                let mut offset = 0;
                for &p in parts {
                    let shape = self.value(p).shape().to_vec();
                    let n = self.value(p).numel();
                    if self.wants(p) {
                        let g = Tensor::new(shape, dy.data()[offset..offset + n].to_vec())?;
                        Self::accumulate(grads, p, g);
                    }
                    offset += n;
                    debug_assert_eq!(n % cols.max(1), 0);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.wants(p) {
                        let rows = dy.rows();
                        let mut data = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            data.extend_from_slice(&dy.row(r)[offset..offset + w]);
                        }
                        let shape = self.value(p).shape().to_vec();
                        Self::accumulate(grads, p, Tensor::new(shape, data)?);
                    }
                    offset += w;
                }
            }
            Op::SliceRows { x, start } => {
                let mut g = Tensor::zeros(self.value(*x).shape());
                let cols = g.cols();
                g.data_mut()[start * cols..start * cols + dy.numel()].copy_from_slice(dy.data());
                Self::accumulate(grads, *x, g);
            }
            Op::SliceCols { x, start } => {
                let mut g = Tensor::zeros(self.value(*x).shape());
                let w = dy.cols();
                for r in 0..dy.rows() {
                    g.row_mut(r)[*start..start + w].copy_from_slice(dy.row(r));
                }
                Self::accumulate(grads, *x, g);
            }
            Op::CrossEntropy { logits, targets } => {
                let z = self.value(*logits);
                let scale = dy.data()[0] / T::lit(targets.len() as f64);
                let mut g = z.clone();
                for (r, &t) in targets.iter().enumerate() {
                    let ls = super::tensor::log_softmax_slice(z.row(r));
                    for (j, o) in g.row_mut(r).iter_mut().enumerate() {
                        let p = ls[j].exp();
                        let target = if j == t { T::one() } else { T::zero() };
                        *o = (p - target) * scale;
                    }
                }
                Self::accumulate(grads, *logits, g);
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                Self::accumulate(grads, *a, Tensor::full(&shape, dy.data()[0]));
            }
        }
        Ok(())
    }
}

fn elementwise<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Returns (mean, 1/std, x - mean) for one row.
fn normalize_row<T: Real>(row: &[T]) -> (T, T, Vec<T>) {
    let n = T::lit(row.len() as f64);
    let mean = row.iter().copied().sum::<T>() / n;
    let centered: Vec<T> = row.iter().map(|&x| x - mean).collect();
    let var = centered.iter().map(|&c| c * c).sum::<T>() / n;
    let rstd = T::one() / (var + T::lit(LAYER_NORM_EPS)).sqrt();
    (mean, rstd, centered)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let u = c * (x + T::lit(0.044715) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let u = c * (x + T::lit(0.044715) * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + T::lit(3.0 * 0.044715) * x * x);
    T::lit(0.5) * (T::one() + t) + T::lit(0.5) * x * (T::one() - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f64>::new();
        let p = g.leaf(Tensor::from_rows(&[vec![1.0, -2.0], vec![3.0, 4.0]]), true);
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn independent_loss_gives_zero_gradient() {
        let mut g = Graph::<f64>::new();
        let p = g.leaf(Tensor::from_rows(&[vec![1.0, 2.0]]), true);
        let q = g.leaf(Tensor::from_rows(&[vec![5.0]]), false);
        let s = g.sum(q);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(p).is_none());
        let pv = g.value(p).clone();
        assert_eq!(grads.get_or_zeros(p, &pv).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::<f64>::new();
        let p = g.leaf(Tensor::zeros(&[2, 2]), true);
        assert!(matches!(g.backward(p), Err(Error::Usage(_))));
    }

    #[test]
    fn frozen_leaves_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]), false);
        let x = g.leaf(Tensor::from_rows(&[vec![1.0, 1.0]]), true);
        let y = g.matmul(x, w).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.len(), 1);
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn truncate_discards_tail() {
        let mut g = Graph::<f32>::new();
        let a = g.leaf(Tensor::zeros(&[1, 1]), false);
        let mark = g.len();
        let _ = g.scale(a, 2.0);
        g.truncate(mark);
        assert_eq!(g.len(), 1);
    }
}
