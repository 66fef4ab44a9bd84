use std::rc::Rc;

use crate::error::{PretError, Result};

use super::mask::AttentionMask;
use super::nn::{ParamId, ParamStore};
use super::Scalar;

/// Handle into a [`Graph`]'s node tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Col,
}

#[derive(Clone)]
enum Op {
    Leaf,
    Matmul(TensorId, TensorId),
    Add(TensorId, TensorId),
    AddRow(TensorId, TensorId),
    MulRow(TensorId, TensorId),
    Scale(TensorId, f64),
    Gelu(TensorId),
    Normalize(TensorId),
    MaskedSoftmax(TensorId),
    Transpose(TensorId),
    ConcatRows(Vec<TensorId>),
    ConcatCols(Vec<TensorId>),
    SliceRows(TensorId, usize, usize),
    SliceCols(TensorId, usize, usize),
    GatherRows(TensorId, Rc<Vec<usize>>),
    CrossEntropyMean(TensorId, Rc<Vec<usize>>),
    MeanAll(TensorId),
}

struct Node<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op,
}

const LN_EPS: f64 = 1e-5;

/// One computation graph (tape). All tensors are 2-D row-major; scalars are
/// `[1,1]`. Matmuls increment the FLOP counter by `2*m*k*n`.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    bindings: Vec<(ParamId, TensorId)>,
    pub flops: u64,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bindings: Vec::new(),
            flops: 0,
        }
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<T>, requires_grad: bool, op: Op) -> TensorId {
        debug_assert_eq!(data.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            data,
            grad: None,
            requires_grad,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, data: Vec<T>, rows: usize, cols: usize) -> TensorId {
        self.push(rows, cols, data, false, Op::Leaf)
    }

    pub fn variable(&mut self, data: Vec<T>, rows: usize, cols: usize) -> TensorId {
        self.push(rows, cols, data, true, Op::Leaf)
    }

    pub fn scalar(&mut self, x: T) -> TensorId {
        self.constant(vec![x], 1, 1)
    }

    /// Bind a stored parameter into this graph. Gradients accumulated during
    /// `backward` flow back to the store via [`Graph::accumulate_grads`].
    pub fn param(&mut self, store: &ParamStore<T>, pid: ParamId) -> TensorId {
        let p = store.get(pid);
        let (rows, cols) = p.dims2();
        let id = self.push(rows, cols, p.data.clone(), true, Op::Leaf);
        self.bindings.push((pid, id));
        id
    }

    pub fn rows(&self, id: TensorId) -> usize {
        self.nodes[id.0].rows
    }

    pub fn cols(&self, id: TensorId) -> usize {
        self.nodes[id.0].cols
    }

    pub fn shape(&self, id: TensorId) -> [usize; 2] {
        [self.nodes[id.0].rows, self.nodes[id.0].cols]
    }

    pub fn value(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].data
    }

    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn requires(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    // ---- ops ----

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k) = (self.rows(a), self.cols(a));
        let (k2, n) = (self.rows(b), self.cols(b));
        if k != k2 {
            return Err(PretError::Dimension {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let data = matmul_nn(self.value(a), self.value(b), m, k, n);
        self.flops += 2 * (m as u64) * (k as u64) * (n as u64);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(m, n, data, rg, Op::Matmul(a, b)))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let data: Vec<T> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        let [r, c] = self.shape(a);
        self.push(r, c, data, rg, Op::Add(a, b))
    }

    /// `[m,n] + [1,n]` row broadcast (bias add).
    pub fn add_row(&mut self, a: TensorId, row: TensorId) -> TensorId {
        let [m, n] = self.shape(a);
        assert_eq!(self.shape(row), [1, n], "add_row shape mismatch");
        let rv = self.value(row).to_vec();
        let data: Vec<T> = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + rv[i % n])
            .collect();
        let rg = self.requires(a) || self.requires(row);
        self.push(m, n, data, rg, Op::AddRow(a, row))
    }

    /// `[m,n] * [1,n]` row broadcast (layer-norm gain).
    pub fn mul_row(&mut self, a: TensorId, row: TensorId) -> TensorId {
        let [m, n] = self.shape(a);
        assert_eq!(self.shape(row), [1, n], "mul_row shape mismatch");
        let rv = self.value(row).to_vec();
        let data: Vec<T> = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x * rv[i % n])
            .collect();
        let rg = self.requires(a) || self.requires(row);
        self.push(m, n, data, rg, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: TensorId, s: f64) -> TensorId {
        let sv = T::from_f(s);
        let data: Vec<T> = self.value(a).iter().map(|&x| x * sv).collect();
        let rg = self.requires(a);
        let [r, c] = self.shape(a);
        self.push(r, c, data, rg, Op::Scale(a, s))
    }

    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        let data: Vec<T> = self.value(a).iter().map(|&x| gelu_fwd(x)).collect();
        let rg = self.requires(a);
        let [r, c] = self.shape(a);
        self.push(r, c, data, rg, Op::Gelu(a))
    }

    /// Per-row zero-mean unit-variance normalization (layer norm without the
    /// affine part; see [`super::nn::LayerNorm`]).
    pub fn normalize(&mut self, a: TensorId) -> TensorId {
        let [m, n] = self.shape(a);
        let mut data = Vec::with_capacity(m * n);
        let eps = T::from_f(LN_EPS);
        let inv_n = T::from_f(1.0 / n as f64);
        for r in 0..m {
            let row = &self.value(a)[r * n..(r + 1) * n];
            let mean = row.iter().fold(T::zero(), |s, &x| s + x) * inv_n;
            let var = row
                .iter()
                .fold(T::zero(), |s, &x| s + (x - mean) * (x - mean))
                * inv_n;
            let inv_std = (var + eps).sqrt().recip();
            data.extend(row.iter().map(|&x| (x - mean) * inv_std));
        }
        let rg = self.requires(a);
        self.push(m, n, data, rg, Op::Normalize(a))
    }

    /// Row-wise numerically stabilized softmax.
    pub fn softmax_rows(&mut self, a: TensorId) -> TensorId {
        self.masked_softmax(a, None).expect("unmasked softmax cannot fail")
    }

    /// Softmax along the requested axis.
    pub fn softmax(&mut self, a: TensorId, axis: Axis) -> TensorId {
        match axis {
            Axis::Row => self.softmax_rows(a),
            Axis::Col => {
                let t = self.transpose(a);
                let s = self.softmax_rows(t);
                self.transpose(s)
            }
        }
    }

    /// Row-wise softmax over the allowed entries of `mask`; masked-out
    /// positions receive exactly zero weight.
    pub fn masked_softmax(&mut self, a: TensorId, mask: Option<Rc<AttentionMask>>) -> Result<TensorId> {
        let [m, n] = self.shape(a);
        if let Some(mk) = &mask {
            if mk.rows != m || mk.cols != n {
                return Err(PretError::Mask(format!(
                    "mask {}x{} does not match logits {}x{}",
                    mk.rows, mk.cols, m, n
                )));
            }
            mk.validate()?;
        }
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = &self.value(a)[r * n..(r + 1) * n];
            let allowed = |c: usize| mask.as_ref().map_or(true, |mk| mk.get(r, c));
            let mut mx = T::neg_infinity();
            for (c, &x) in row.iter().enumerate() {
                if allowed(c) && x > mx {
                    mx = x;
                }
            }
            let mut sum = T::zero();
            let mut exps = vec![T::zero(); n];
            for (c, &x) in row.iter().enumerate() {
                if allowed(c) {
                    let e = (x - mx).exp();
                    exps[c] = e;
                    sum = sum + e;
                }
            }
            data.extend(exps.into_iter().map(|e| e / sum));
        }
        let rg = self.requires(a);
        Ok(self.push(m, n, data, rg, Op::MaskedSoftmax(a)))
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let [m, n] = self.shape(a);
        let src = self.value(a);
        let mut data = vec![T::zero(); m * n];
        for r in 0..m {
            for c in 0..n {
                data[c * m + r] = src[r * n + c];
            }
        }
        let rg = self.requires(a);
        self.push(n, m, data, rg, Op::Transpose(a))
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty());
        let n = self.cols(parts[0]);
        let mut data = Vec::new();
        let mut m = 0;
        let mut rg = false;
        for &p in parts {
            assert_eq!(self.cols(p), n, "concat_rows col mismatch");
            m += self.rows(p);
            rg |= self.requires(p);
            data.extend_from_slice(self.value(p));
        }
        self.push(m, n, data, rg, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty());
        let m = self.rows(parts[0]);
        let total: usize = parts.iter().map(|&p| self.cols(p)).sum();
        let mut data = vec![T::zero(); m * total];
        let mut off = 0;
        let mut rg = false;
        for &p in parts {
            assert_eq!(self.rows(p), m, "concat_cols row mismatch");
            let w = self.cols(p);
            for r in 0..m {
                data[r * total + off..r * total + off + w]
                    .copy_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
            rg |= self.requires(p);
            off += w;
        }
        self.push(m, total, data, rg, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: TensorId, start: usize, end: usize) -> TensorId {
        let [m, n] = self.shape(a);
        assert!(start <= end && end <= m, "slice_rows out of range");
        let data = self.value(a)[start * n..end * n].to_vec();
        let rg = self.requires(a);
        self.push(end - start, n, data, rg, Op::SliceRows(a, start, end))
    }

    pub fn slice_cols(&mut self, a: TensorId, start: usize, end: usize) -> TensorId {
        let [m, n] = self.shape(a);
        assert!(start <= end && end <= n, "slice_cols out of range");
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for r in 0..m {
            data.extend_from_slice(&self.value(a)[r * n + start..r * n + end]);
        }
        let rg = self.requires(a);
        self.push(m, w, data, rg, Op::SliceCols(a, start, end))
    }

    /// Select rows by index (embedding lookup / masked-position gather).
    pub fn gather_rows(&mut self, a: TensorId, indices: &[usize]) -> Result<TensorId> {
        let [m, n] = self.shape(a);
        for &i in indices {
            if i >= m {
                return Err(PretError::Index { index: i, len: m });
            }
        }
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(&self.value(a)[i * n..(i + 1) * n]);
        }
        let rg = self.requires(a);
        Ok(self.push(
            indices.len(),
            n,
            data,
            rg,
            Op::GatherRows(a, Rc::new(indices.to_vec())),
        ))
    }

    /// Mean of `-log softmax(logits_row)[target]` over rows; scalar output.
    pub fn cross_entropy_mean(&mut self, logits: TensorId, targets: &[usize]) -> Result<TensorId> {
        let [m, n] = self.shape(logits);
        if targets.len() != m {
            return Err(PretError::Contract(format!(
                "cross entropy: {} targets for {} rows",
                targets.len(),
                m
            )));
        }
        for &t in targets {
            if t >= n {
                return Err(PretError::Index { index: t, len: n });
            }
        }
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            let row = &self.value(logits)[r * n..(r + 1) * n];
            let mx = row.iter().fold(T::neg_infinity(), |a, &b| if b > a { b } else { a });
            let lse = row.iter().fold(T::zero(), |s, &x| s + (x - mx).exp()).ln() + mx;
            total = total + lse - row[t];
        }
        let mean = total / T::from_f(m as f64);
        let rg = self.requires(logits);
        Ok(self.push(
            1,
            1,
            vec![mean],
            rg,
            Op::CrossEntropyMean(logits, Rc::new(targets.to_vec())),
        ))
    }

    /// Cross entropy of a single logit row against one target index.
    pub fn cross_entropy(&mut self, logits: TensorId, target: usize) -> Result<TensorId> {
        assert_eq!(self.rows(logits), 1, "cross_entropy expects a [1,n] row");
        self.cross_entropy_mean(logits, &[target])
    }

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let [m, n] = self.shape(a);
        let sum = self.value(a).iter().fold(T::zero(), |s, &x| s + x);
        let mean = sum / T::from_f((m * n) as f64);
        let rg = self.requires(a);
        self.push(1, 1, vec![mean], rg, Op::MeanAll(a))
    }

    // ---- backward ----

    /// Reverse-mode pass from a scalar loss. Populates `grad` on every node
    /// with `requires_grad` reachable from `loss`.
    pub fn backward(&mut self, loss: TensorId) {
        assert_eq!(self.shape(loss), [1, 1], "backward needs a scalar loss");
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let go = self.nodes[i].grad.clone().unwrap();
            match op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (m, k) = (self.rows(a), self.cols(a));
                    let n = self.cols(b);
                    if self.requires(a) {
                        let da = matmul_nt(&go, self.value(b), m, n, k);
                        self.add_grad(a, &da);
                    }
                    if self.requires(b) {
                        let db = matmul_tn(self.value(a), &go, m, k, n);
                        self.add_grad(b, &db);
                    }
                }
                Op::Add(a, b) => {
                    if self.requires(a) {
                        self.add_grad(a, &go);
                    }
                    if self.requires(b) {
                        self.add_grad(b, &go);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.requires(a) {
                        self.add_grad(a, &go);
                    }
                    if self.requires(row) {
                        let n = self.cols(row);
                        let mut dr = vec![T::zero(); n];
                        for (i, &g) in go.iter().enumerate() {
                            dr[i % n] = dr[i % n] + g;
                        }
                        self.add_grad(row, &dr);
                    }
                }
                Op::MulRow(a, row) => {
                    let n = self.cols(row);
                    if self.requires(a) {
                        let rv = self.value(row).to_vec();
                        let da: Vec<T> = go
                            .iter()
                            .enumerate()
                            .map(|(i, &g)| g * rv[i % n])
                            .collect();
                        self.add_grad(a, &da);
                    }
                    if self.requires(row) {
                        let av = self.value(a);
                        let mut dr = vec![T::zero(); n];
                        for (i, &g) in go.iter().enumerate() {
                            dr[i % n] = dr[i % n] + g * av[i];
                        }
                        self.add_grad(row, &dr);
                    }
                }
                Op::Scale(a, s) => {
                    if self.requires(a) {
                        let sv = T::from_f(s);
                        let da: Vec<T> = go.iter().map(|&g| g * sv).collect();
                        self.add_grad(a, &da);
                    }
                }
                Op::Gelu(a) => {
                    if self.requires(a) {
                        let da: Vec<T> = self.value(a)
                            .iter()
                            .zip(&go)
                            .map(|(&x, &g)| g * gelu_bwd(x))
                            .collect();
                        self.add_grad(a, &da);
                    }
                }
                Op::Normalize(a) => {
                    if self.requires(a) {
                        let [m, n] = self.shape(a);
                        let inv_n = T::from_f(1.0 / n as f64);
                        let eps = T::from_f(LN_EPS);
                        let mut da = vec![T::zero(); m * n];
                        for r in 0..m {
                            let xrow = &self.value(a)[r * n..(r + 1) * n];
                            let yrow = &self.nodes[i].data[r * n..(r + 1) * n];
                            let grow = &go[r * n..(r + 1) * n];
                            let mean = xrow.iter().fold(T::zero(), |s, &x| s + x) * inv_n;
                            let var = xrow
                                .iter()
                                .fold(T::zero(), |s, &x| s + (x - mean) * (x - mean))
                                * inv_n;
                            let inv_std = (var + eps).sqrt().recip();
                            let g_mean = grow.iter().fold(T::zero(), |s, &g| s + g) * inv_n;
                            let gy_mean = grow
                                .iter()
                                .zip(yrow)
                                .fold(T::zero(), |s, (&g, &y)| s + g * y)
                                * inv_n;
                            for c in 0..n {
                                da[r * n + c] =
                                    (grow[c] - g_mean - yrow[c] * gy_mean) * inv_std;
                            }
                        }
                        self.add_grad(a, &da);
                    }
                }
                Op::MaskedSoftmax(a) => {
                    if self.requires(a) {
                        let [m, n] = self.shape(a);
                        let mut da = vec![T::zero(); m * n];
                        for r in 0..m {
                            let p = &self.nodes[i].data[r * n..(r + 1) * n];
                            let grow = &go[r * n..(r + 1) * n];
                            let dot = p
                                .iter()
                                .zip(grow)
                                .fold(T::zero(), |s, (&pi, &gi)| s + pi * gi);
                            for c in 0..n {
                                da[r * n + c] = p[c] * (grow[c] - dot);
                            }
                        }
                        self.add_grad(a, &da);
                    }
                }
                Op::Transpose(a) => {
                    if self.requires(a) {
                        let [m, n] = self.shape(a);
                        let mut da = vec![T::zero(); m * n];
                        for r in 0..n {
                            for c in 0..m {
                                da[c * n + r] = go[r * m + c];
                            }
                        }
                        self.add_grad(a, &da);
                    }
                }
                Op::ConcatRows(parts) => {
                    let n = self.cols(i_id(i));
                    let mut off = 0;
                    for p in parts {
                        let pr = self.rows(p);
                        if self.requires(p) {
                            let dp = go[off * n..(off + pr) * n].to_vec();
                            self.add_grad(p, &dp);
                        }
                        off += pr;
                    }
                }
                Op::ConcatCols(parts) => {
                    let m = self.rows(i_id(i));
                    let total = self.cols(i_id(i));
                    let mut off = 0;
                    for p in parts {
                        let w = self.cols(p);
                        if self.requires(p) {
                            let mut dp = vec![T::zero(); m * w];
                            for r in 0..m {
                                dp[r * w..(r + 1) * w]
                                    .copy_from_slice(&go[r * total + off..r * total + off + w]);
                            }
                            self.add_grad(p, &dp);
                        }
                        off += w;
                    }
                }
                Op::SliceRows(a, start, _end) => {
                    if self.requires(a) {
                        let [m, n] = self.shape(a);
                        let sr = self.rows(i_id(i));
                        let mut da = vec![T::zero(); m * n];
                        da[start * n..(start + sr) * n].copy_from_slice(&go);
                        self.add_grad(a, &da);
                    }
                }
                Op::SliceCols(a, start, end) => {
                    if self.requires(a) {
                        let [m, n] = self.shape(a);
                        let w = end - start;
                        let mut da = vec![T::zero(); m * n];
                        for r in 0..m {
                            da[r * n + start..r * n + end]
                                .copy_from_slice(&go[r * w..(r + 1) * w]);
                        }
                        self.add_grad(a, &da);
                    }
                }
                Op::GatherRows(a, indices) => {
                    if self.requires(a) {
                        let [m, n] = self.shape(a);
                        let mut da = vec![T::zero(); m * n];
                        for (r, &src) in indices.iter().enumerate() {
                            for c in 0..n {
                                da[src * n + c] = da[src * n + c] + go[r * n + c];
                            }
                        }
                        self.add_grad(a, &da);
                    }
                }
                Op::CrossEntropyMean(logits, targets) => {
                    if self.requires(logits) {
                        let [m, n] = self.shape(logits);
                        let g = go[0] / T::from_f(m as f64);
                        let mut da = vec![T::zero(); m * n];
                        for (r, &t) in targets.iter().enumerate() {
                            let row = &self.value(logits)[r * n..(r + 1) * n];
                            let mx = row
                                .iter()
                                .fold(T::neg_infinity(), |a, &b| if b > a { b } else { a });
                            let sum = row.iter().fold(T::zero(), |s, &x| s + (x - mx).exp());
                            for c in 0..n {
                                let p = (row[c] - mx).exp() / sum;
                                let delta = if c == t { T::one() } else { T::zero() };
                                da[r * n + c] = (p - delta) * g;
                            }
                        }
                        self.add_grad(logits, &da);
                    }
                }
                Op::MeanAll(a) => {
                    if self.requires(a) {
                        let [m, n] = self.shape(a);
                        let g = go[0] / T::from_f((m * n) as f64);
                        let da = vec![g; m * n];
                        self.add_grad(a, &da);
                    }
                }
            }
        }
    }

    fn add_grad(&mut self, id: TensorId, delta: &[T]) {
        let node = &mut self.nodes[id.0];
        match &mut node.grad {
            Some(g) => {
                for (gi, &d) in g.iter_mut().zip(delta) {
                    *gi = *gi + d;
                }
            }
            None => node.grad = Some(delta.to_vec()),
        }
    }

    /// Fold this graph's parameter gradients back into the store.
    pub fn accumulate_grads(&self, store: &mut ParamStore<T>) {
        for &(pid, tid) in &self.bindings {
            if let Some(g) = self.grad(tid) {
                store.add_grad(pid, g);
            }
        }
    }
}

fn i_id(i: usize) -> TensorId {
    TensorId(i)
}

// ---- matmul kernels ----

/// C[m,n] = A[m,k] * B[k,n]
fn matmul_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for l in 0..k {
            let av = a[i * k + l];
            if av == T::zero() {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

/// C[m,k] = A[m,n] * B[k,n]^T
fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            let mut s = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                s = s + av * bv;
            }
            c[i * k + j] = s;
        }
    }
    c
}

/// C[k,n] = A[m,k]^T * B[m,n]
fn matmul_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for l in 0..k {
            let av = a[i * k + l];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[l * n..(l + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

fn gelu_fwd<T: Scalar>(x: T) -> T {
    let c = T::from_f(0.7978845608028654); // sqrt(2/pi)
    let a = T::from_f(0.044715);
    let half = T::from_f(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (T::one() + u.tanh())
}

fn gelu_bwd<T: Scalar>(x: T) -> T {
    let c = T::from_f(0.7978845608028654);
    let a = T::from_f(0.044715);
    let half = T::from_f(0.5);
    let three = T::from_f(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * a * x * x)
}

/// Scaled dot-product multi-head attention over already-projected `q`, `k`,
/// `v`. `mask` rows must match `q` rows and cols must match `k` rows.
pub fn attention<T: Scalar>(
    g: &mut Graph<T>,
    q: TensorId,
    k: TensorId,
    v: TensorId,
    mask: &AttentionMask,
    heads: usize,
) -> Result<TensorId> {
    let [s, d] = g.shape(q);
    let [l, dk] = g.shape(k);
    if d != dk || g.shape(v) != [l, d] {
        return Err(PretError::Dimension {
            op: "attention",
            lhs: vec![s, d],
            rhs: vec![l, dk],
        });
    }
    if d % heads != 0 {
        return Err(PretError::Shape(format!(
            "feature dim {} not divisible by {} heads",
            d, heads
        )));
    }
    if mask.rows != s || mask.cols != l {
        return Err(PretError::Mask(format!(
            "mask {}x{} does not match attention {}x{}",
            mask.rows, mask.cols, s, l
        )));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mask = Rc::new(mask.clone());
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * dh, (h + 1) * dh);
        let kh = g.slice_cols(k, h * dh, (h + 1) * dh);
        let vh = g.slice_cols(v, h * dh, (h + 1) * dh);
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt)?;
        let scaled = g.scale(scores, scale);
        let probs = g.masked_softmax(scaled, Some(mask.clone()))?;
        let oh = g.matmul(probs, vh)?;
        outs.push(oh);
    }
    Ok(g.concat_cols(&outs))
}
