//! Define-by-run reverse-mode autodiff.
//!
//! Every operation evaluates eagerly and appends a node, so node indices are a
//! topological order and the backward sweep is a single reverse pass that
//! visits each node once. Values are stored as `rows × cols` matrices; vectors
//! are `1 × n` and scalars `1 × 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{dot, log_sum_exp, matmul_acc, matmul_nt_acc, matmul_tn_acc, softmax_into};
use super::{DenseArray, ParameterStore};
use crate::error::{contract, shape, Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
struct Value {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Value {
    fn len(&self) -> usize {
        self.data.len()
    }
}

enum Op<'a> {
    Constant,
    Param(usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MatMul(Var, Var),
    Gelu(Var),
    Sum(Var),
    SumAll(Vec<Var>),
    Softmax(Var),
    LogSumExp(Var),
    Gather { table: Var, ids: Vec<usize> },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    CausalAttention { qkv: Var, heads: usize, probs: Vec<f64> },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<f64> },
    KlDiv { logits: Var, teacher: Vec<f64>, temperature: f64, student: Vec<f64> },
    WeightedSqDist { x: Var, anchor: &'a [f64], weights: &'a [f64] },
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddRow(..) => "add_row",
            Op::MatMul(..) => "matmul",
            Op::Gelu(_) => "gelu",
            Op::Sum(_) => "sum",
            Op::SumAll(_) => "sum_all",
            Op::Softmax(_) => "softmax",
            Op::LogSumExp(_) => "log_sum_exp",
            Op::Gather { .. } => "gather",
            Op::LayerNorm { .. } => "layer_norm",
            Op::CausalAttention { .. } => "causal_attention",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::KlDiv { .. } => "kl_div",
            Op::WeightedSqDist { .. } => "weighted_sq_dist",
        }
    }
}

struct Node<'a> {
    value: Value,
    op: Op<'a>,
}

/// Recording of one computation. Borrowed anchors (for quadratic penalties)
/// live for `'a`.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    overflow: Option<&'static str>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), overflow: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<f64>, op: Op<'a>) -> Var {
        debug_assert_eq!(rows * cols, data.len());
        if self.overflow.is_none() && data.iter().any(|v| !v.is_finite()) {
            self.overflow = Some(op.name());
        }
        self.nodes.push(Node { value: Value { rows, cols, data }, op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Value {
        &self.nodes[v.0].value
    }

    /// `(rows, cols)` of a node.
    pub fn dims(&self, v: Var) -> (usize, usize) {
        let x = self.val(v);
        (x.rows, x.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.val(v).data
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.val(v).data[0]
    }

    /// First operation that produced a non-finite value, if any.
    pub fn overflow(&self) -> Option<&'static str> {
        self.overflow
    }

    /// Returns the cached value of `root` as a [`DenseArray`].
    pub fn forward(&self, root: Var) -> Result<DenseArray> {
        if let Some(op) = self.overflow {
            return Err(Error::NumericOverflow { op });
        }
        let v = self.val(root);
        let shape = if v.rows == 1 { vec![v.cols] } else { vec![v.rows, v.cols] };
        Ok(DenseArray::from_parts(shape, v.data.clone()))
    }

    // ----- leaves -----

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() || rows == 0 || cols == 0 {
            return Err(shape(format!("constant {rows}x{cols} with {} values", data.len())));
        }
        Ok(self.push(rows, cols, data, Op::Constant))
    }

    pub fn scalar_constant(&mut self, v: f64) -> Var {
        self.push(1, 1, vec![v], Op::Constant)
    }

    /// Differentiable leaf holding a copy of a parameter array.
    ///
    /// `index` is the array's position in its [`ParameterStore`]; it is used by
    /// [`Adjoints::param_grads`] to route gradients back.
    pub fn param(&mut self, index: usize, array: &DenseArray) -> Var {
        self.push(array.rows(), array.cols(), array.data().to_vec(), Op::Param(index))
    }

    /// Binds every array of `store` as a parameter leaf, in store order.
    pub fn bind(&mut self, store: &ParameterStore) -> Vec<Var> {
        store.arrays().iter().enumerate().map(|(i, a)| self.param(i, a)).collect()
    }

    // ----- element-wise -----

    fn same_dims(&self, a: Var, b: Var, op: &str) -> Result<(usize, usize)> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(shape(format!("{op}: {da:?} vs {db:?}")));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_dims(a, b, "add")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(r, c, data, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_dims(a, b, "sub")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        Ok(self.push(r, c, data, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_dims(a, b, "mul")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(r, c, data, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let (r, c) = self.dims(a);
        let data = self.value(a).iter().map(|x| x * k).collect();
        self.push(r, c, data, Op::Scale(a, k))
    }

    /// Adds the `1 × c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        if self.dims(b) != (1, c) {
            return Err(shape(format!("add_row: {:?} onto {r}x{c}", self.dims(b))));
        }
        let bias = self.value(b);
        let data = self.value(a).chunks(c).flat_map(|row| row.iter().zip(bias).map(|(x, y)| x + y)).collect();
        Ok(self.push(r, c, data, Op::AddRow(a, b)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(shape(format!("matmul: {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let data = self
            .value(a)
            .iter()
            .map(|&x| 0.5 * x * (1.0 + libm::tanh(GELU_C * (x + 0.044715 * x * x * x))))
            .collect();
        self.push(r, c, data, Op::Gelu(a))
    }

    // ----- reductions -----

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    /// Sum of scalar nodes. An empty list is the constant 0.
    pub fn sum_all(&mut self, terms: &[Var]) -> Result<Var> {
        for &t in terms {
            if self.dims(t) != (1, 1) {
                return Err(shape(format!("sum_all: term of shape {:?} is not scalar", self.dims(t))));
            }
        }
        let s = terms.iter().map(|&t| self.scalar(t)).sum();
        Ok(self.push(1, 1, vec![s], Op::SumAll(terms.to_vec())))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let mut out = vec![0.0; r * c];
        for (row, o) in self.value(a).chunks(c).zip(out.chunks_mut(c)) {
            softmax_into(row, o);
        }
        self.push(r, c, out, Op::Softmax(a))
    }

    /// Row-wise log-sum-exp, giving an `r × 1` column.
    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let out = self.value(a).chunks(c).map(log_sum_exp).collect();
        self.push(r, 1, out, Op::LogSumExp(a))
    }

    // ----- model building blocks -----

    /// Selects rows of `table` (an embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (n, d) = self.dims(table);
        if ids.is_empty() {
            return Err(contract("gather: empty id list"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(contract(format!("gather: id {bad} out of range for {n} rows")));
        }
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        Ok(self.push(ids.len(), d, out, Op::Gather { table, ids: ids.to_vec() }))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        if self.dims(gain) != (1, c) || self.dims(bias) != (1, c) {
            return Err(shape(format!("layer_norm: gain/bias must be 1x{c}")));
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let mut out = vec![0.0; r * c];
        let mut xhat = vec![0.0; r * c];
        let mut rstd = vec![0.0; r];
        for (i, row) in self.value(x).chunks(c).enumerate() {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / libm::sqrt(var + LN_EPS);
            rstd[i] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        Ok(self.push(r, c, out, Op::LayerNorm { x, gain, bias, xhat, rstd }))
    }

    /// Multi-head causal self-attention over packed `[q | k | v]` rows.
    ///
    /// `qkv` is `T × 3d`; the result is `T × d`. Position `t` attends to
    /// positions `0..=t` only.
    pub fn causal_attention(&mut self, qkv: Var, heads: usize) -> Result<Var> {
        let (t, c3) = self.dims(qkv);
        if c3 % 3 != 0 || heads == 0 || (c3 / 3) % heads != 0 {
            return Err(shape(format!("causal_attention: width {c3} with {heads} heads")));
        }
        let d = c3 / 3;
        let dh = d / heads;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let x = self.value(qkv);
        let mut probs = vec![0.0; heads * t * t];
        let mut out = vec![0.0; t * d];
        let mut scores = vec![0.0; t];
        for h in 0..heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            for i in 0..t {
                let q = &x[i * c3 + qo..i * c3 + qo + dh];
                for (j, s) in scores[..=i].iter_mut().enumerate() {
                    *s = dot(q, &x[j * c3 + ko..j * c3 + ko + dh]) * scale;
                }
                let p = &mut probs[(h * t + i) * t..(h * t + i) * t + i + 1];
                softmax_into(&scores[..=i], p);
                let o = &mut out[i * d + h * dh..i * d + (h + 1) * dh];
                for (j, &pj) in p.iter().enumerate() {
                    let v = &x[j * c3 + vo..j * c3 + vo + dh];
                    for (oe, &ve) in o.iter_mut().zip(v) {
                        *oe += pj * ve;
                    }
                }
            }
        }
        Ok(self.push(t, d, out, Op::CausalAttention { qkv, heads, probs }))
    }

    /// Summed negative log-likelihood of `targets` under row-wise softmax of `logits`.
    ///
    /// Rows whose target is `None` contribute nothing.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let (r, c) = self.dims(logits);
        if targets.len() != r {
            return Err(shape(format!("cross_entropy: {} targets for {r} rows", targets.len())));
        }
        if let Some(bad) = targets.iter().flatten().find(|&&y| y >= c) {
            return Err(contract(format!("cross_entropy: target {bad} out of range for {c} classes")));
        }
        let z = self.value(logits);
        let mut probs = vec![0.0; r * c];
        let mut nll = 0.0;
        for (i, tgt) in targets.iter().enumerate() {
            if let Some(y) = *tgt {
                let row = &z[i * c..(i + 1) * c];
                nll += log_sum_exp(row) - row[y];
                softmax_into(row, &mut probs[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(1, 1, vec![nll], Op::CrossEntropy { logits, targets: targets.to_vec(), probs }))
    }

    /// Σ over rows of KL(softmax(teacher/τ) ‖ softmax(logits/τ)), in nats.
    pub fn kl_div(&mut self, logits: Var, teacher_logits: &[f64], temperature: f64) -> Result<Var> {
        let (r, c) = self.dims(logits);
        if teacher_logits.len() != r * c {
            return Err(shape(format!("kl_div: teacher has {} values for {r}x{c}", teacher_logits.len())));
        }
        if !(temperature > 0.0) {
            return Err(contract("kl_div: temperature must be positive"));
        }
        let z = self.value(logits);
        let mut teacher = vec![0.0; r * c];
        let mut student = vec![0.0; r * c];
        let mut total = 0.0;
        let mut ts = vec![0.0; c];
        let mut ss = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                ts[j] = teacher_logits[i * c + j] / temperature;
                ss[j] = z[i * c + j] / temperature;
            }
            let (lt, ls) = (log_sum_exp(&ts), log_sum_exp(&ss));
            softmax_into(&ts, &mut teacher[i * c..(i + 1) * c]);
            softmax_into(&ss, &mut student[i * c..(i + 1) * c]);
            for j in 0..c {
                let p = teacher[i * c + j];
                if p > 0.0 {
                    total += p * ((ts[j] - lt) - (ss[j] - ls));
                }
            }
        }
        // Rounding can leave a tiny negative sum for identical distributions.
        let total = total.max(0.0);
        Ok(self.push(1, 1, vec![total], Op::KlDiv { logits, teacher, temperature, student }))
    }

    /// Σᵢ wᵢ (xᵢ − aᵢ)² against a borrowed anchor and weights.
    pub fn weighted_sq_dist(&mut self, x: Var, anchor: &'a [f64], weights: &'a [f64]) -> Result<Var> {
        let n = self.val(x).len();
        if anchor.len() != n || weights.len() != n {
            return Err(shape(format!(
                "weighted_sq_dist: {n} values vs anchor {} / weights {}",
                anchor.len(),
                weights.len()
            )));
        }
        let s = self
            .value(x)
            .iter()
            .zip(anchor)
            .zip(weights)
            .map(|((x, a), w)| w * (x - a) * (x - a))
            .sum();
        Ok(self.push(1, 1, vec![s], Op::WeightedSqDist { x, anchor, weights }))
    }

    // ----- backward -----

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Adjoints> {
        if let Some(op) = self.overflow {
            return Err(Error::NumericOverflow { op });
        }
        if self.dims(root) != (1, 1) {
            return Err(contract(format!("backward: root has shape {:?}, expected a scalar", self.dims(root))));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut adj);
            adj[i] = Some(g);
        }
        for g in adj.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { op: "backward" });
            }
        }
        Ok(Adjoints { adj, params: self.param_nodes() })
    }

    fn param_nodes(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(node, n)| match n.op {
                Op::Param(p) => Some((p, node)),
                _ => None,
            })
            .collect()
    }

    fn propagate(&self, node: &Node<'a>, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let len = |v: Var| self.val(v).len();
        // Returns the adjoint buffer of `v`, allocating zeros on first touch.
        fn slot<'s>(adj: &'s mut [Option<Vec<f64>>], v: Var, n: usize) -> &'s mut Vec<f64> {
            adj[v.0].get_or_insert_with(|| vec![0.0; n])
        }
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::Add(a, b) => {
                for (s, &gv) in slot(adj, *a, len(*a)).iter_mut().zip(g) {
                    *s += gv;
                }
                for (s, &gv) in slot(adj, *b, len(*b)).iter_mut().zip(g) {
                    *s += gv;
                }
            }
            Op::Sub(a, b) => {
                for (s, &gv) in slot(adj, *a, len(*a)).iter_mut().zip(g) {
                    *s += gv;
                }
                for (s, &gv) in slot(adj, *b, len(*b)).iter_mut().zip(g) {
                    *s -= gv;
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                for ((s, &gv), &y) in slot(adj, *a, va.len()).iter_mut().zip(g).zip(vb) {
                    *s += gv * y;
                }
                for ((s, &gv), &x) in slot(adj, *b, vb.len()).iter_mut().zip(g).zip(va) {
                    *s += gv * x;
                }
            }
            Op::Scale(a, k) => {
                for (s, &gv) in slot(adj, *a, len(*a)).iter_mut().zip(g) {
                    *s += gv * k;
                }
            }
            Op::AddRow(a, b) => {
                let c = self.dims(*b).1;
                for (s, &gv) in slot(adj, *a, len(*a)).iter_mut().zip(g) {
                    *s += gv;
                }
                let sb = slot(adj, *b, c);
                for row in g.chunks(c) {
                    for (s, &gv) in sb.iter_mut().zip(row) {
                        *s += gv;
                    }
                }
            }
            Op::MatMul(a, b) => {
                let ((m, k), (_, n)) = (self.dims(*a), self.dims(*b));
                let (va, vb) = (self.value(*a), self.value(*b));
                matmul_nt_acc(g, vb, slot(adj, *a, m * k), m, k, n);
                matmul_tn_acc(va, g, slot(adj, *b, k * n), m, k, n);
            }
            Op::Gelu(a) => {
                let x = self.value(*a);
                for ((s, &gv), &x) in slot(adj, *a, x.len()).iter_mut().zip(g).zip(x) {
                    let u = GELU_C * (x + 0.044715 * x * x * x);
                    let t = libm::tanh(u);
                    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                    *s += gv * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
                }
            }
            Op::Sum(a) => {
                for s in slot(adj, *a, len(*a)).iter_mut() {
                    *s += g[0];
                }
            }
            Op::SumAll(terms) => {
                for &t in terms {
                    slot(adj, t, 1)[0] += g[0];
                }
            }
            Op::Softmax(a) => {
                let c = self.dims(*a).1;
                let y = &node.value.data;
                let sa = slot(adj, *a, y.len());
                for ((srow, grow), yrow) in sa.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                    let inner = dot(grow, yrow);
                    for ((s, &gv), &yv) in srow.iter_mut().zip(grow).zip(yrow) {
                        *s += yv * (gv - inner);
                    }
                }
            }
            Op::LogSumExp(a) => {
                let c = self.dims(*a).1;
                let x = self.value(*a);
                let mut p = vec![0.0; c];
                let sa = slot(adj, *a, x.len());
                for (i, (srow, xrow)) in sa.chunks_mut(c).zip(x.chunks(c)).enumerate() {
                    softmax_into(xrow, &mut p);
                    for (s, &pv) in srow.iter_mut().zip(&p) {
                        *s += g[i] * pv;
                    }
                }
            }
            Op::Gather { table, ids } => {
                let d = self.dims(*table).1;
                let st = slot(adj, *table, len(*table));
                for (row, &id) in g.chunks(d).zip(ids) {
                    for (s, &gv) in st[id * d..(id + 1) * d].iter_mut().zip(row) {
                        *s += gv;
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let c = self.dims(*x).1;
                let gv = self.value(*gain);
                let mut dgain = vec![0.0; c];
                let mut dbias = vec![0.0; c];
                let mut dxhat = vec![0.0; c];
                let sx = slot(adj, *x, xhat.len());
                for (i, (grow, hrow)) in g.chunks(c).zip(xhat.chunks(c)).enumerate() {
                    for j in 0..c {
                        dgain[j] += grow[j] * hrow[j];
                        dbias[j] += grow[j];
                        dxhat[j] = grow[j] * gv[j];
                    }
                    let mean_d = dxhat.iter().sum::<f64>() / c as f64;
                    let mean_dh = dot(&dxhat, hrow) / c as f64;
                    for j in 0..c {
                        sx[i * c + j] += rstd[i] * (dxhat[j] - mean_d - hrow[j] * mean_dh);
                    }
                }
                for (s, v) in slot(adj, *gain, c).iter_mut().zip(&dgain) {
                    *s += v;
                }
                for (s, v) in slot(adj, *bias, c).iter_mut().zip(&dbias) {
                    *s += v;
                }
            }
            Op::CausalAttention { qkv, heads, probs } => {
                let (t, c3) = self.dims(*qkv);
                let d = c3 / 3;
                let dh = d / heads;
                let scale = 1.0 / libm::sqrt(dh as f64);
                let x = self.value(*qkv);
                let mut dx = vec![0.0; t * c3];
                let mut dp = vec![0.0; t];
                for h in 0..*heads {
                    let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                    for i in 0..t {
                        let go = &g[i * d + h * dh..i * d + (h + 1) * dh];
                        let p = &probs[(h * t + i) * t..(h * t + i) * t + i + 1];
                        for j in 0..=i {
                            dp[j] = dot(go, &x[j * c3 + vo..j * c3 + vo + dh]);
                            let dv = &mut dx[j * c3 + vo..j * c3 + vo + dh];
                            for (s, &gv) in dv.iter_mut().zip(go) {
                                *s += p[j] * gv;
                            }
                        }
                        let inner = dot(&dp[..=i], p);
                        for j in 0..=i {
                            let ds = p[j] * (dp[j] - inner) * scale;
                            if ds == 0.0 {
                                continue;
                            }
                            for e in 0..dh {
                                dx[i * c3 + qo + e] += ds * x[j * c3 + ko + e];
                                dx[j * c3 + ko + e] += ds * x[i * c3 + qo + e];
                            }
                        }
                    }
                }
                for (s, v) in slot(adj, *qkv, t * c3).iter_mut().zip(&dx) {
                    *s += v;
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let c = self.dims(*logits).1;
                let sl = slot(adj, *logits, probs.len());
                for (i, tgt) in targets.iter().enumerate() {
                    if let Some(y) = *tgt {
                        let row = &mut sl[i * c..(i + 1) * c];
                        for (s, &p) in row.iter_mut().zip(&probs[i * c..(i + 1) * c]) {
                            *s += g[0] * p;
                        }
                        row[y] -= g[0];
                    }
                }
            }
            Op::KlDiv { logits, teacher, temperature, student } => {
                let sl = slot(adj, *logits, student.len());
                for ((s, &q), &p) in sl.iter_mut().zip(student).zip(teacher) {
                    *s += g[0] * (q - p) / temperature;
                }
            }
            Op::WeightedSqDist { x, anchor, weights } => {
                let xv = self.value(*x);
                let sx = slot(adj, *x, xv.len());
                for (((s, &xv), &a), &w) in sx.iter_mut().zip(xv).zip(anchor.iter()).zip(weights.iter()) {
                    *s += g[0] * 2.0 * w * (xv - a);
                }
            }
        }
    }
}

/// Result of a backward sweep.
pub struct Adjoints {
    adj: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, usize)>,
}

impl Adjoints {
    /// Gradient with respect to `v`; `None` when `v` does not influence the root.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.adj.get(v.0).and_then(|g| g.as_deref())
    }

    /// Collects parameter-leaf gradients into a store aligned with `store`.
    ///
    /// Parameters that were not bound, or did not influence the root, get zeros.
    /// A parameter bound more than once accumulates all its leaves.
    pub fn param_grads(&self, store: &ParameterStore) -> ParameterStore {
        let mut out = store.zeros_like();
        for &(p, node) in &self.params {
            if let Some(g) = &self.adj[node] {
                for (o, v) in out.arrays_mut()[p].data_mut().iter_mut().zip(g) {
                    *o += v;
                }
            }
        }
        out
    }
}
