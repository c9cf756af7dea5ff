//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and enough saved
//! state to compute its vector-Jacobian product. Nodes are only ever appended,
//! so the tape order is a valid topological order and `backward` is a single
//! reverse sweep.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::params::{ParamGrads, ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::{softmax_strided, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

enum Op<F> {
    Leaf,
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, F),
    Relu(usize),
    Gelu(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    Softmax {
        x: usize,
        axis: usize,
    },
    GatherRows {
        table: usize,
        ids: Vec<usize>,
    },
    GatherElems {
        src: usize,
        idx: Vec<usize>,
    },
    ConcatCols {
        parts: Vec<usize>,
    },
    ConcatRows {
        parts: Vec<usize>,
    },
    SliceCols {
        x: usize,
        start: usize,
    },
    Reshape(usize),
    Sum(usize),
    Mean(usize),
    CrossEntropy {
        logits: usize,
        targets: Vec<Option<usize>>,
        probs: Vec<F>,
        count: usize,
    },
    Bce {
        logits: usize,
        labels: Vec<F>,
        rows: Vec<bool>,
        count: usize,
    },
}

struct Node<F> {
    value: Arc<Tensor<F>>,
    op: Op<F>,
    requires_grad: bool,
}

/// A computation tape. Single-threaded; build one per example when
/// parallelising.
pub struct Graph<F: Real> {
    nodes: RefCell<Vec<Node<F>>>,
    param_leaves: RefCell<HashMap<ParamId, Var>>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(TensorError::Shape(msg))
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(256)),
            param_leaves: RefCell::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn push_shared(&self, value: Arc<Tensor<F>>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Arc<Tensor<F>> {
        Arc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient (masks, frozen inputs).
    pub fn constant(&self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Brings a stored parameter onto the tape. Repeated calls return the same
    /// node so gradients accumulate in one place.
    pub fn param(&self, store: &ParamStore<F>, id: ParamId) -> Var {
        if let Some(v) = self.param_leaves.borrow().get(&id) {
            return *v;
        }
        let v = self.push_shared(store.shared(id), store.is_trainable(id));
        self.param_leaves.borrow_mut().insert(id, v);
        v
    }

    fn dims(&self, v: Var) -> Result<(usize, usize)> {
        self.nodes.borrow()[v.0].value.dims2()
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a)?;
        let (k2, n) = self.dims(b)?;
        if k != k2 {
            return shape_err(format!("matmul {m}x{k} by {k2}x{n}"));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![F::ZERO; m * n];
        F::gemm(
            m, k, n, F::ONE, av.data(), k as isize, 1, bv.data(), n as isize, 1, F::ZERO, &mut out,
            n as isize, 1,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a.0, b.0), rg))
    }

    /// `a @ b^T` for `a: m×k`, `b: n×k`.
    pub fn matmul_t(&self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a)?;
        let (n, k2) = self.dims(b)?;
        if k != k2 {
            return shape_err(format!("matmul_t {m}x{k} by ({n}x{k2})^T"));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![F::ZERO; m * n];
        F::gemm(
            m, k, n, F::ONE, av.data(), k as isize, 1, bv.data(), 1, k as isize, F::ZERO, &mut out,
            n as isize, 1,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMulT(a.0, b.0), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return shape_err(format!("{what}: {sa:?} vs {sb:?}"));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Tensor<F> {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(F) -> F) -> Tensor<F> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| f(x)).collect();
        Tensor::new(av.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a.0, b.0), rg))
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a.0, b.0), rg))
    }

    /// Broadcasts a length-`n` vector over the rows of an `m×n` matrix.
    pub fn add_row(&self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let bv = self.value(bias);
        if bv.len() != n {
            return shape_err(format!("add_row: {m}x{n} + {:?}", bv.shape()));
        }
        let av = self.value(a);
        let mut out = av.data().to_vec();
        for r in 0..m {
            for (o, &b) in out[r * n..(r + 1) * n].iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Tensor::new(av.shape().to_vec(), out)?, Op::AddRow(a.0, bias.0), rg))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let c = F::from_f64(c);
        let out = self.map(a, |x| x * c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a.0, c), rg)
    }

    pub fn relu(&self, a: Var) -> Var {
        let out = self.map(a, |x| if x > F::ZERO { x } else { F::ZERO });
        let rg = self.rg(a);
        self.push(out, Op::Relu(a.0), rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&self, a: Var) -> Var {
        let c = F::from_f64(GELU_C);
        let k = F::from_f64(GELU_A);
        let half = F::from_f64(0.5);
        let out = self.map(a, |x| half * x * (F::ONE + (c * (x + k * x * x * x)).tanh()));
        let rg = self.rg(a);
        self.push(out, Op::Gelu(a.0), rg)
    }

    /// Row-wise layer normalisation with learned gain and bias.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(x)?;
        let (gv, bv) = (self.value(gain), self.value(bias));
        if gv.len() != n || bv.len() != n {
            return shape_err(format!("layer_norm width {n}, gain {:?}", gv.shape()));
        }
        let xv = self.value(x);
        let nf = F::from_f64(n as f64);
        let eps = F::from_f64(LN_EPS);
        let mut xhat = vec![F::ZERO; m * n];
        let mut rstd = vec![F::ZERO; m];
        let mut out = vec![F::ZERO; m * n];
        for r in 0..m {
            let row = &xv.data()[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<F>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / nf;
            let rs = F::ONE / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..n {
                let h = (row[c] - mean) * rs;
                xhat[r * n + c] = h;
                out[r * n + c] = h * gv.data()[c] + bv.data()[c];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            Tensor::new(xv.shape().to_vec(), out)?,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Softmax along `axis` (0 = columns, 1 = rows) of a matrix.
    pub fn softmax(&self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        let out = xv.softmax(axis)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Softmax { x: x.0, axis }, rg))
    }

    /// Row lookup: `out[i] = table[ids[i]]`.
    pub fn gather_rows(&self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dims(table)?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(TensorError::Index(format!("row {bad} out of range for {rows} rows")));
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            out.extend_from_slice(tv.row(i));
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::new(vec![ids.len(), cols], out)?,
            Op::GatherRows {
                table: table.0,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Embedding lookup; identical to [`Graph::gather_rows`].
    pub fn embedding_lookup(&self, table: Var, ids: &[usize]) -> Result<Var> {
        self.gather_rows(table, ids)
    }

    /// Gathers flat elements of `src` into a tensor of `shape`.
    pub fn gather_elems(&self, src: Var, idx: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let sv = self.value(src);
        if let Some(&bad) = idx.iter().find(|&&i| i >= sv.len()) {
            return Err(TensorError::Index(format!("element {bad} out of range {}", sv.len())));
        }
        let out: Vec<F> = idx.iter().map(|&i| sv.data()[i]).collect();
        let t = Tensor::new(shape.to_vec(), out)?;
        let rg = self.rg(src);
        Ok(self.push(t, Op::GatherElems { src: src.0, idx }, rg))
    }

    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        match axis {
            0 => self.concat_rows(parts),
            1 => self.concat_cols(parts),
            _ => shape_err(format!("concat axis {axis}")),
        }
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat of nothing".into());
        }
        let dims = parts.iter().map(|&p| self.dims(p)).collect::<Result<Vec<_>>>()?;
        let m = dims[0].0;
        if dims.iter().any(|d| d.0 != m) {
            return shape_err(format!("concat_cols row mismatch {dims:?}"));
        }
        let total: usize = dims.iter().map(|d| d.1).sum();
        let vals: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for v in &vals {
                out.extend_from_slice(v.row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(vec![m, total], out)?,
            Op::ConcatCols {
                parts: parts.iter().map(|p| p.0).collect(),
            },
            rg,
        ))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat of nothing".into());
        }
        let dims = parts.iter().map(|&p| self.dims(p)).collect::<Result<Vec<_>>>()?;
        let n = dims[0].1;
        if dims.iter().any(|d| d.1 != n) {
            return shape_err(format!("concat_rows column mismatch {dims:?}"));
        }
        let rows: usize = dims.iter().map(|d| d.0).sum();
        let mut out = Vec::with_capacity(rows * n);
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(vec![rows, n], out)?,
            Op::ConcatRows {
                parts: parts.iter().map(|p| p.0).collect(),
            },
            rg,
        ))
    }

    pub fn slice_cols(&self, x: Var, start: usize, width: usize) -> Result<Var> {
        let (m, n) = self.dims(x)?;
        if start + width > n {
            return shape_err(format!("slice_cols {start}+{width} > {n}"));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(m * width);
        for r in 0..m {
            out.extend_from_slice(&xv.row(r)[start..start + width]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![m, width], out)?, Op::SliceCols { x: x.0, start }, rg))
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let t = (*xv).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x.0), rg))
    }

    pub fn sum(&self, x: Var) -> Var {
        let s: F = self.value(x).data().iter().copied().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x.0), rg)
    }

    pub fn mean(&self, x: Var) -> Var {
        let xv = self.value(x);
        let s: F = xv.data().iter().copied().sum::<F>() / F::from_f64(xv.len().max(1) as f64);
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x.0), rg)
    }

    /// Sum of elementwise products.
    pub fn dot(&self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    /// Mean cross-entropy over rows of `logits` whose target is `Some`.
    /// Returns a zero scalar when no row is labelled.
    pub fn cross_entropy(&self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let (m, v) = self.dims(logits)?;
        if targets.len() != m {
            return shape_err(format!("cross_entropy: {m} rows, {} targets", targets.len()));
        }
        if let Some(bad) = targets.iter().flatten().find(|&&t| t >= v) {
            return Err(TensorError::Index(format!("target {bad} outside vocabulary of {v}")));
        }
        let lv = self.value(logits);
        if lv.data().iter().any(|x| x.is_nan()) {
            return Err(TensorError::Numeric("cross_entropy logits contain NaN".into()));
        }
        let mut probs = lv.data().to_vec();
        let mut total = F::ZERO;
        let mut count = 0usize;
        for (r, t) in targets.iter().enumerate() {
            softmax_strided(&mut probs, r * v, v, 1);
            if let Some(t) = t {
                let row = lv.row(r);
                let max = row.iter().copied().fold(F::from_f64(f64::NEG_INFINITY), F::max);
                let lse = row.iter().map(|&x| (x - max).exp()).sum::<F>().ln() + max;
                total += lse - row[*t];
                count += 1;
            }
        }
        let loss = if count > 0 {
            total / F::from_f64(count as f64)
        } else {
            F::ZERO
        };
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                probs,
                count,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of independent sigmoid outputs against 0/1
    /// `labels`, over rows flagged in `rows` and all columns.
    pub fn binary_cross_entropy(&self, logits: Var, labels: &[F], rows: &[bool]) -> Result<Var> {
        let (m, a) = self.dims(logits)?;
        if labels.len() != m * a || rows.len() != m {
            return shape_err(format!("bce: logits {m}x{a}, labels {}", labels.len()));
        }
        let lv = self.value(logits);
        let mut total = F::ZERO;
        let mut count = 0usize;
        for r in 0..m {
            if !rows[r] {
                continue;
            }
            for c in 0..a {
                let z = lv.data()[r * a + c];
                let y = labels[r * a + c];
                let pos = if z > F::ZERO { z } else { F::ZERO };
                total += pos - z * y + (F::ONE + (-z.abs()).exp()).ln();
                count += 1;
            }
        }
        let loss = if count > 0 {
            total / F::from_f64(count as f64)
        } else {
            F::ZERO
        };
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                logits: logits.0,
                labels: labels.to_vec(),
                rows: rows.to_vec(),
                count,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.0];
        if root.value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![F::ONE]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if node.requires_grad {
                backprop(&nodes, i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    /// Adds the gradients of every parameter leaf on this tape into `acc`.
    pub fn accumulate_param_grads(&self, grads: &Gradients<F>, acc: &mut ParamGrads<F>) {
        for (id, v) in self.param_leaves.borrow().iter() {
            if let Some(g) = &grads.grads[v.0] {
                acc.add(*id, g);
            }
        }
    }
}

/// Gradients produced by one backward sweep, indexed by tape node.
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
    shapes: Vec<Vec<usize>>,
}

impl<F: Real> Gradients<F> {
    /// Gradient with respect to `v`; zeros when `v` was not reached.
    pub fn wrt(&self, v: Var) -> Tensor<F> {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

fn slot<'a, F: Real>(grads: &'a mut [Option<Vec<F>>], nodes: &[Node<F>], idx: usize) -> Option<&'a mut Vec<F>> {
    if !nodes[idx].requires_grad {
        return None;
    }
    let len = nodes[idx].value.len();
    Some(grads[idx].get_or_insert_with(|| vec![F::ZERO; len]))
}

fn backprop<F: Real>(nodes: &[Node<F>], i: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = nodes[*a].value.dims2().unwrap();
            let n = nodes[*b].value.dims2().unwrap().1;
            let bv = nodes[*b].value.data();
            let av = nodes[*a].value.data();
            if let Some(da) = slot(grads, nodes, *a) {
                // dA = G (m×n) · B^T (n×k)
                F::gemm(m, n, k, F::ONE, g, n as isize, 1, bv, 1, n as isize, F::ONE, da, k as isize, 1);
            }
            if let Some(db) = slot(grads, nodes, *b) {
                // dB = A^T (k×m) · G (m×n)
                F::gemm(k, m, n, F::ONE, av, 1, k as isize, g, n as isize, 1, F::ONE, db, n as isize, 1);
            }
        }
        Op::MatMulT(a, b) => {
            let (m, k) = nodes[*a].value.dims2().unwrap();
            let n = nodes[*b].value.dims2().unwrap().0;
            let bv = nodes[*b].value.data();
            let av = nodes[*a].value.data();
            if let Some(da) = slot(grads, nodes, *a) {
                // dA = G (m×n) · B (n×k)
                F::gemm(m, n, k, F::ONE, g, n as isize, 1, bv, k as isize, 1, F::ONE, da, k as isize, 1);
            }
            if let Some(db) = slot(grads, nodes, *b) {
                // dB = G^T (n×m) · A (m×k)
                F::gemm(n, m, k, F::ONE, g, 1, n as isize, av, k as isize, 1, F::ONE, db, k as isize, 1);
            }
        }
        Op::Add(a, b) => {
            for p in [*a, *b] {
                if let Some(d) = slot(grads, nodes, p) {
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d += g);
                }
            }
        }
        Op::Sub(a, b) => {
            if let Some(d) = slot(grads, nodes, *a) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d += g);
            }
            if let Some(d) = slot(grads, nodes, *b) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d -= g);
            }
        }
        Op::AddRow(a, b) => {
            if let Some(d) = slot(grads, nodes, *a) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d += g);
            }
            let n = nodes[*b].value.len();
            if let Some(d) = slot(grads, nodes, *b) {
                for row in g.chunks(n) {
                    d.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
                }
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (nodes[*a].value.data(), nodes[*b].value.data());
            if let Some(d) = slot(grads, nodes, *a) {
                for ((d, &g), &y) in d.iter_mut().zip(g).zip(bv) {
                    *d += g * y;
                }
            }
            if let Some(d) = slot(grads, nodes, *b) {
                for ((d, &g), &x) in d.iter_mut().zip(g).zip(av) {
                    *d += g * x;
                }
            }
        }
        Op::Scale(a, c) => {
            if let Some(d) = slot(grads, nodes, *a) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * *c);
            }
        }
        Op::Relu(a) => {
            let av = nodes[*a].value.data();
            if let Some(d) = slot(grads, nodes, *a) {
                for ((d, &g), &x) in d.iter_mut().zip(g).zip(av) {
                    if x > F::ZERO {
                        *d += g;
                    }
                }
            }
        }
        Op::Gelu(a) => {
            let av = nodes[*a].value.data();
            let c = F::from_f64(GELU_C);
            let k = F::from_f64(GELU_A);
            let half = F::from_f64(0.5);
            let three = F::from_f64(3.0);
            if let Some(d) = slot(grads, nodes, *a) {
                for ((d, &g), &x) in d.iter_mut().zip(g).zip(av) {
                    let t = (c * (x + k * x * x * x)).tanh();
                    let dt = (F::ONE - t * t) * c * (F::ONE + three * k * x * x);
                    *d += g * (half * (F::ONE + t) + half * x * dt);
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        } => {
            let n = nodes[*gain].value.len();
            let m = rstd.len();
            let gv = nodes[*gain].value.data();
            if let Some(d) = slot(grads, nodes, *gain) {
                for r in 0..m {
                    for c in 0..n {
                        d[c] += g[r * n + c] * xhat[r * n + c];
                    }
                }
            }
            if let Some(d) = slot(grads, nodes, *bias) {
                for r in 0..m {
                    for c in 0..n {
                        d[c] += g[r * n + c];
                    }
                }
            }
            if let Some(d) = slot(grads, nodes, *x) {
                let nf = F::from_f64(n as f64);
                for r in 0..m {
                    let mut mean_dh = F::ZERO;
                    let mut mean_dh_h = F::ZERO;
                    for c in 0..n {
                        let dh = g[r * n + c] * gv[c];
                        mean_dh += dh;
                        mean_dh_h += dh * xhat[r * n + c];
                    }
                    mean_dh /= nf;
                    mean_dh_h /= nf;
                    for c in 0..n {
                        let dh = g[r * n + c] * gv[c];
                        d[r * n + c] += rstd[r] * (dh - mean_dh - xhat[r * n + c] * mean_dh_h);
                    }
                }
            }
        }
        Op::Softmax { x, axis } => {
            let y = node.value.data();
            let (rows, cols) = node.value.dims2().unwrap();
            let (lanes, len, lane_stride, stride) = if *axis == 0 {
                (cols, rows, 1, cols)
            } else {
                (rows, cols, cols, 1)
            };
            if let Some(d) = slot(grads, nodes, *x) {
                for lane in 0..lanes {
                    let base = lane * lane_stride;
                    let mut dot = F::ZERO;
                    for t in 0..len {
                        let idx = base + t * stride;
                        dot += g[idx] * y[idx];
                    }
                    for t in 0..len {
                        let idx = base + t * stride;
                        d[idx] += y[idx] * (g[idx] - dot);
                    }
                }
            }
        }
        Op::GatherRows { table, ids } => {
            let cols = nodes[*table].value.dims2().unwrap().1;
            if let Some(d) = slot(grads, nodes, *table) {
                for (r, &id) in ids.iter().enumerate() {
                    let src = &g[r * cols..(r + 1) * cols];
                    d[id * cols..(id + 1) * cols]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(d, &g)| *d += g);
                }
            }
        }
        Op::GatherElems { src, idx } => {
            if let Some(d) = slot(grads, nodes, *src) {
                for (&i, &gv) in idx.iter().zip(g) {
                    d[i] += gv;
                }
            }
        }
        Op::ConcatCols { parts } => {
            let (m, total) = node.value.dims2().unwrap();
            let mut offset = 0;
            for &p in parts {
                let w = nodes[p].value.dims2().unwrap().1;
                if let Some(d) = slot(grads, nodes, p) {
                    for r in 0..m {
                        let src = &g[r * total + offset..r * total + offset + w];
                        d[r * w..(r + 1) * w].iter_mut().zip(src).for_each(|(d, &g)| *d += g);
                    }
                }
                offset += w;
            }
        }
        Op::ConcatRows { parts } => {
            let mut offset = 0;
            for &p in parts {
                let len = nodes[p].value.len();
                if let Some(d) = slot(grads, nodes, p) {
                    d.iter_mut()
                        .zip(&g[offset..offset + len])
                        .for_each(|(d, &g)| *d += g);
                }
                offset += len;
            }
        }
        Op::SliceCols { x, start } => {
            let (m, w) = node.value.dims2().unwrap();
            let n = nodes[*x].value.dims2().unwrap().1;
            if let Some(d) = slot(grads, nodes, *x) {
                for r in 0..m {
                    d[r * n + start..r * n + start + w]
                        .iter_mut()
                        .zip(&g[r * w..(r + 1) * w])
                        .for_each(|(d, &g)| *d += g);
                }
            }
        }
        Op::Reshape(x) => {
            if let Some(d) = slot(grads, nodes, *x) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d += g);
            }
        }
        Op::Sum(x) => {
            if let Some(d) = slot(grads, nodes, *x) {
                d.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Mean(x) => {
            let n = F::from_f64(nodes[*x].value.len().max(1) as f64);
            if let Some(d) = slot(grads, nodes, *x) {
                d.iter_mut().for_each(|d| *d += g[0] / n);
            }
        }
        Op::CrossEntropy {
            logits,
            targets,
            probs,
            count,
        } => {
            if *count == 0 {
                return;
            }
            let v = nodes[*logits].value.dims2().unwrap().1;
            let scale = g[0] / F::from_f64(*count as f64);
            if let Some(d) = slot(grads, nodes, *logits) {
                for (r, t) in targets.iter().enumerate() {
                    let Some(t) = t else { continue };
                    for c in 0..v {
                        let onehot = if c == *t { F::ONE } else { F::ZERO };
                        d[r * v + c] += scale * (probs[r * v + c] - onehot);
                    }
                }
            }
        }
        Op::Bce {
            logits,
            labels,
            rows,
            count,
        } => {
            if *count == 0 {
                return;
            }
            let (_, a) = nodes[*logits].value.dims2().unwrap();
            let zv = nodes[*logits].value.data();
            let scale = g[0] / F::from_f64(*count as f64);
            if let Some(d) = slot(grads, nodes, *logits) {
                for (r, &keep) in rows.iter().enumerate() {
                    if !keep {
                        continue;
                    }
                    for c in 0..a {
                        let idx = r * a + c;
                        let s = sigmoid(zv[idx]);
                        d[idx] += scale * (s - labels[idx]);
                    }
                }
            }
        }
    }
}

pub fn sigmoid<F: Real>(z: F) -> F {
    if z >= F::ZERO {
        F::ONE / (F::ONE + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::ONE + e)
    }
}
