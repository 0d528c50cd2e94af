//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse and returns the gradient of a scalar loss with respect
//! to every recorded node, including the parameters pulled in from a
//! [`ParamStore`].

use std::collections::HashMap;

use ndarray::{s, Array1, Array2, Axis, Zip};

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    /// Elementwise product with a constant (dropout masks).
    MaskConst(Var, Array2<f64>),
    /// `x * mul + add` with constant rows (batch norm at inference).
    AffineConst(Var, Array1<f64>),
    /// Column-wise standardisation with batch statistics.
    Normalize(Var, Array1<f64>),
    Gather(Var, Vec<usize>),
    MeanRows(Var, Vec<Vec<usize>>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    /// Per-row `m·a + (1−m)·b`.
    Blend(Var, Var, Vec<f64>),
    Sum(Var),
    SoftmaxCe(Var, Vec<usize>, Array2<f64>),
    SigmoidBce(Var, Vec<usize>, Array2<f64>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    layer: String,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    scope: String,
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}

/// Gradients of one scalar with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient per parameter id, `None` for parameters the loss never touched.
    pub fn param_grads(&self, n_params: usize) -> Vec<Option<Array2<f64>>> {
        let mut out = vec![None; n_params];
        for &(id, v) in &self.params {
            out[id.0] = self.grads[v.0].clone();
        }
        out
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

fn shape_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::invalid(format!("shape mismatch in {what}: {a:?} vs {b:?}"))
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

    /// Names the layer that subsequent nodes belong to (used in numeric errors).
    pub fn set_scope(&mut self, scope: &str) {
        self.scope = scope.to_string();
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            layer: self.scope.clone(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Input)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.nrows() {
            return Err(shape_err("matmul", x.shape(), y.shape()));
        }
        let out = x.dot(y);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.nrows() != 1 || r.ncols() != x.ncols() {
            return Err(shape_err("bias add", x.shape(), r.shape()));
        }
        let out = x + r;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.nrows() != 1 || r.ncols() != x.ncols() {
            return Err(shape_err("row scale", x.shape(), r.shape()));
        }
        let out = x * r;
        Ok(self.push(out, Op::MulRow(a, row)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("add", x.shape(), y.shape()));
        }
        let out = x + y;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("elementwise product", x.shape(), y.shape()));
        }
        let out = x * y;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn mask(&mut self, a: Var, mask: Array2<f64>) -> Result<Var> {
        let x = self.value(a);
        if x.shape() != mask.shape() {
            return Err(shape_err("mask", x.shape(), mask.shape()));
        }
        let out = x * &mask;
        Ok(self.push(out, Op::MaskConst(a, mask)))
    }

    pub fn affine_const(&mut self, a: Var, mul: Array1<f64>, add: &Array1<f64>) -> Result<Var> {
        let x = self.value(a);
        if mul.len() != x.ncols() || add.len() != x.ncols() {
            return Err(shape_err("affine", x.shape(), &[mul.len()]));
        }
        let out = x * &mul + add;
        Ok(self.push(out, Op::AffineConst(a, mul)))
    }

    /// Standardises each column with the batch mean and (biased) variance.
    /// Returns the output and the batch statistics.
    pub fn normalize(&mut self, a: Var, eps: f64) -> Result<(Var, Array1<f64>, Array1<f64>)> {
        let x = self.value(a);
        if x.nrows() == 0 {
            return Err(Error::invalid("batch norm over an empty batch"));
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("nonempty");
        let inv = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let out = centered * &inv;
        Ok((self.push(out, Op::Normalize(a, inv)), mean, var))
    }

    pub fn gather(&mut self, table: Var, ids: Vec<usize>) -> Result<Var> {
        let t = self.value(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= t.nrows()) {
            return Err(Error::invalid(format!(
                "token id {bad} outside embedding table of {} rows",
                t.nrows()
            )));
        }
        let mut out = Array2::zeros((ids.len(), t.ncols()));
        for (r, &i) in ids.iter().enumerate() {
            out.row_mut(r).assign(&t.row(i));
        }
        Ok(self.push(out, Op::Gather(table, ids)))
    }

    /// Output row `g` is the mean of input rows `groups[g]` (zero when empty).
    pub fn mean_rows(&mut self, a: Var, groups: Vec<Vec<usize>>) -> Var {
        let x = self.value(a);
        let mut out = Array2::zeros((groups.len(), x.ncols()));
        for (g, rows) in groups.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let mut acc = out.row_mut(g);
            for &r in rows {
                acc += &x.row(r);
            }
            acc /= rows.len() as f64;
        }
        self.push(out, Op::MeanRows(a, groups))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).nrows();
        if let Some(p) = parts.iter().find(|p| self.value(**p).nrows() != rows) {
            return Err(shape_err("concat", &[rows], self.value(*p).shape()));
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(out, Op::SliceCols(a, start, end))
    }

    pub fn blend(&mut self, a: Var, b: Var, row_mask: Vec<f64>) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() || row_mask.len() != x.nrows() {
            return Err(shape_err("blend", x.shape(), y.shape()));
        }
        let mut out = y.clone();
        for (r, &m) in row_mask.iter().enumerate() {
            let mut row = out.row_mut(r);
            row *= 1.0 - m;
            row.scaled_add(m, &x.row(r));
        }
        Ok(self.push(out, Op::Blend(a, b, row_mask)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), total), Op::Sum(a))
    }

    /// Mean categorical cross-entropy of row-wise softmax against class ids.
    pub fn softmax_ce(&mut self, logits: Var, targets: Vec<usize>) -> Result<Var> {
        let z = self.value(logits);
        if targets.len() != z.nrows() || targets.iter().any(|&t| t >= z.ncols()) {
            return Err(shape_err("cross-entropy targets", z.shape(), &[targets.len()]));
        }
        let probs = softmax_rows(z);
        let n = targets.len().max(1) as f64;
        let loss = -targets
            .iter()
            .enumerate()
            .map(|(i, &t)| log_softmax_at(z, i, t))
            .sum::<f64>()
            / n;
        Ok(self.push(Array2::from_elem((1, 1), loss), Op::SoftmaxCe(logits, targets, probs)))
    }

    /// Mean over rows of the summed per-output binary cross-entropy against
    /// one-hot targets.
    pub fn sigmoid_bce(&mut self, logits: Var, targets: Vec<usize>) -> Result<Var> {
        let z = self.value(logits);
        if targets.len() != z.nrows() || targets.iter().any(|&t| t >= z.ncols()) {
            return Err(shape_err("cross-entropy targets", z.shape(), &[targets.len()]));
        }
        let probs = z.mapv(sigmoid);
        let n = targets.len().max(1) as f64;
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            for (c, &v) in z.row(i).iter().enumerate() {
                let y = if c == t { 1.0 } else { 0.0 };
                loss += v.max(0.0) - v * y + (-v.abs()).exp().ln_1p();
            }
        }
        Ok(self.push(
            Array2::from_elem((1, 1), loss / n),
            Op::SigmoidBce(logits, targets, probs),
        ))
    }

    /// Layer name of the first node holding a non-finite value.
    fn first_non_finite(&self) -> Option<&str> {
        self.nodes
            .iter()
            .find(|n| n.value.iter().any(|v| !v.is_finite()))
            .map(|n| if n.layer.is_empty() { "unscoped" } else { n.layer.as_str() })
    }

    /// Gradient of the scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let l = self.value(loss);
        if l.len() != 1 {
            return Err(Error::invalid(format!("backward from a non-scalar {:?}", l.shape())));
        }
        if !l[[0, 0]].is_finite() {
            return Err(Error::Numeric {
                layer: self.first_non_finite().unwrap_or("loss").to_string(),
                message: format!("non-finite loss {}", l[[0, 0]]),
            });
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].clone() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Param => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    acc(&mut grads, *b, self.value(*a).t().dot(&g));
                }
                Op::AddRow(a, r) => {
                    acc(&mut grads, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::MulRow(a, r) => {
                    let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *r, gr);
                    acc(&mut grads, *a, &g * self.value(*r));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, &g * self.value(*b));
                    acc(&mut grads, *b, &g * self.value(*a));
                }
                Op::Sigmoid(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= y * (1.0 - y));
                    acc(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    acc(&mut grads, *a, d);
                }
                Op::Relu(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| if x <= 0.0 { *d = 0.0 });
                    acc(&mut grads, *a, d);
                }
                Op::MaskConst(a, m) => acc(&mut grads, *a, g * m),
                Op::AffineConst(a, mul) => acc(&mut grads, *a, g * mul),
                Op::Normalize(a, inv) => {
                    let xhat = &node.value;
                    let n = xhat.nrows() as f64;
                    let sum_g = g.sum_axis(Axis(0));
                    let sum_gx = (&g * xhat).sum_axis(Axis(0));
                    let d = (g * n - &sum_g - xhat * &sum_gx) * inv / n;
                    acc(&mut grads, *a, d);
                }
                Op::Gather(t, ids) => {
                    let table = self.value(*t);
                    let mut d = Array2::zeros(table.raw_dim());
                    for (r, &i) in ids.iter().enumerate() {
                        let mut row = d.row_mut(i);
                        row += &g.row(r);
                    }
                    acc(&mut grads, *t, d);
                }
                Op::MeanRows(a, groups) => {
                    let mut d = Array2::zeros(self.value(*a).raw_dim());
                    for (gi, rows) in groups.iter().enumerate() {
                        let w = 1.0 / rows.len().max(1) as f64;
                        for &r in rows {
                            d.row_mut(r).scaled_add(w, &g.row(gi));
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut d = Array2::zeros(self.value(*a).raw_dim());
                    d.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(&mut grads, *a, d);
                }
                Op::Blend(a, b, m) => {
                    let mut da = g.clone();
                    let mut db = g;
                    for (r, &mr) in m.iter().enumerate() {
                        da.row_mut(r).mapv_inplace(|v| v * mr);
                        db.row_mut(r).mapv_inplace(|v| v * (1.0 - mr));
                    }
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).raw_dim();
                    acc(&mut grads, *a, Array2::from_elem(shape, g[[0, 0]]));
                }
                Op::SoftmaxCe(z, targets, probs) | Op::SigmoidBce(z, targets, probs) => {
                    let n = targets.len().max(1) as f64;
                    let mut d = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        d[[i, t]] -= 1.0;
                    }
                    d *= g[[0, 0]] / n;
                    acc(&mut grads, *z, d);
                }
            }
        }
        let params = self.params.iter().map(|(&id, &v)| (id, v)).collect();
        Ok(Gradients { grads, params })
    }
}

/// Row-wise softmax.
pub fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

fn log_softmax_at(z: &Array2<f64>, i: usize, t: usize) -> f64 {
    let row = z.row(i);
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row[t] - lse
}

pub(crate) fn logistic(x: f64) -> f64 {
    sigmoid(x)
}
