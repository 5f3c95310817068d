//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] is a tape: every operation evaluates eagerly and records how
//! to propagate gradients. Graphs are cheap to build and are thrown away
//! after each forward/backward pass.

use super::matrix::{gemm, order_invariant_sum, Matrix};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Geometry of a batched neighbour-attention call.
///
/// Rows are agent-major: row `i * batch + b` belongs to agent `i` in sample
/// `b`. Each agent attends over the other `n_agents - 1` agents; neighbour
/// slot `t` of agent `i` refers to agent `t + (t >= i)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionShape {
    pub n_agents: usize,
    pub batch: usize,
    pub heads: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    /// Scores are `q·k / scale`.
    pub scale: f64,
}

impl AttentionShape {
    pub fn slots(&self) -> usize {
        self.n_agents.saturating_sub(1)
    }

    #[inline]
    pub fn neighbour(agent: usize, slot: usize) -> usize {
        slot + usize::from(slot >= agent)
    }
}

// Exponent cap used for gradients towards masked-out neighbours.
const MASKED_EXP_CAP: f64 = 30.0;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    PickCols(Var, Vec<usize>),
    SumAll(Var),
    SumCols(Var),
    StraightThrough(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        mask: Var,
        shape: AttentionShape,
        weights: Vec<f64>,
        exps: Vec<f64>,
        norms: Vec<f64>,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Gradient tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Constant input; gradients are not tracked.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, false)
    }

    /// Trainable leaf; its gradient is available after [`Graph::backward`].
    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, true)
    }

    /// Copies a value into a fresh constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let m = self.value(v).clone();
        self.constant(m)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let bias = self.value(row);
        assert_eq!(bias.rows(), 1, "add_row expects a single row");
        assert_eq!(bias.cols(), self.value(a).cols(), "add_row width mismatch");
        let mut out = self.value(a).clone();
        let bias = bias.row(0).to_vec();
        for r in 0..out.rows() {
            for (x, b) in out.row_mut(r).iter_mut().zip(&bias) {
                *x += b;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(out, Op::AddRow(a, row), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "sub shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let out = Matrix::from_vec(va.rows(), va.cols(), data);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(va.rows(), va.cols(), data);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    /// Scales row `r` of `a` by `col[r, 0]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (va, vc) = (self.value(a), self.value(col));
        assert_eq!(vc.shape(), (va.rows(), 1), "mul_col expects an n×1 column");
        let mut out = va.clone();
        for r in 0..out.rows() {
            let k = vc.get(r, 0);
            for x in out.row_mut(r) {
                *x *= k;
            }
        }
        let ng = self.ng(a) || self.ng(col);
        self.push(out, Op::MulCol(a, col), ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, k), ng)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let ng = self.ng(a);
        self.push(out, Op::LeakyRelu(a, slope), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let ng = self.ng(a);
        self.push(out, Op::Log(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let ng = self.ng(a);
        self.push(out, Op::Exp(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p);
                assert_eq!(src.rows(), rows, "concat_cols row mismatch");
                let w = src.cols();
                out.row_mut(r)[off..off + w].copy_from_slice(src.row(r));
                off += w;
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        assert!(start + len <= src.cols(), "slice_cols out of range");
        let out = Matrix::from_fn(src.rows(), len, |r, c| src.get(r, start + c));
        let ng = self.ng(a);
        self.push(out, Op::SliceCols(a, start), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let src = self.value(p);
            assert_eq!(src.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(src.data());
            rows += src.rows();
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        assert!(start + len <= src.rows(), "slice_rows out of range");
        let c = src.cols();
        let out = Matrix::from_vec(len, c, src.data()[start * c..(start + len) * c].to_vec());
        let ng = self.ng(a);
        self.push(out, Op::SliceRows(a, start), ng)
    }

    /// Row `r` of the output is row `index[r]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Vec<usize>) -> Var {
        let src = self.value(a);
        let c = src.cols();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in &index {
            data.extend_from_slice(src.row(i));
        }
        let out = Matrix::from_vec(index.len(), c, data);
        let ng = self.ng(a);
        self.push(out, Op::GatherRows(a, index), ng)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let out = self.value(a).clone().reshape(rows, cols);
        let ng = self.ng(a);
        self.push(out, Op::Reshape(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut out = src.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let ng = self.ng(a);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut out = src.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for x in row {
                *x -= lse;
            }
        }
        let ng = self.ng(a);
        self.push(out, Op::LogSoftmaxRows(a), ng)
    }

    /// `out[r, 0] = a[r, index[r]]`.
    pub fn pick_cols(&mut self, a: Var, index: Vec<usize>) -> Var {
        let src = self.value(a);
        assert_eq!(index.len(), src.rows(), "pick_cols needs one index per row");
        let out = Matrix::from_fn(src.rows(), 1, |r, _| src.get(r, index[r]));
        let ng = self.ng(a);
        self.push(out, Op::PickCols(a, index), ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.ng(a);
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::SumAll(a), ng)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums as an `n × 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let out = Matrix::from_fn(src.rows(), 1, |r, _| src.row(r).iter().sum());
        let ng = self.ng(a);
        self.push(out, Op::SumCols(a), ng)
    }

    /// Forward: one-hot of each row's argmax. Backward: identity.
    pub fn straight_through(&mut self, soft: Var) -> Var {
        let src = self.value(soft);
        let mut out = Matrix::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            out.set(r, argmax(src.row(r)), 1.0);
        }
        let ng = self.ng(soft);
        self.push(out, Op::StraightThrough(soft), ng)
    }

    /// Masked multi-head neighbour attention.
    ///
    /// `q`, `k` are `R × heads·key_dim`, `v` is `R × heads·value_dim` and
    /// `mask` is `R × (n_agents-1)` in neighbour-slot layout. For each head,
    /// weights are `m_t·exp(s_t) / Σ_u m_u·exp(s_u)` with `s_t = q_i·k_j / scale`;
    /// with a binary mask this is a softmax over unmasked neighbours and masked
    /// neighbours receive exactly zero weight. A row whose mask is all zero
    /// aggregates to the zero vector. Sums are evaluated in an
    /// order-independent way so the output is bit-stable under neighbour
    /// permutation.
    pub fn masked_attention(&mut self, q: Var, k: Var, v: Var, mask: Var, shape: AttentionShape) -> Var {
        let (weights, exps, norms, out) = attention_forward(
            self.value(q),
            self.value(k),
            self.value(v),
            self.value(mask),
            &shape,
        );
        let ng = self.ng(q) || self.ng(k) || self.ng(v) || self.ng(mask);
        self.push(out, Op::Attention { q, k, v, mask, shape, weights, exps, norms }, ng)
    }

    /// Attention weights recorded by a [`Graph::masked_attention`] node,
    /// laid out `[row][head][slot]`.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Back-propagates from a `1 × 1` output.
    pub fn backward(&mut self, out: Var) {
        assert_eq!(self.value(out).shape(), (1, 1), "backward needs a scalar output");
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[out.0] = Some(Matrix::filled(1, 1, 1.0));
        for idx in (0..=out.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = self.grads[idx].take() else { continue };
            self.propagate(idx, &g);
            self.grads[idx] = Some(g);
        }
    }

    fn acc(&mut self, v: Var, g: Matrix) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn acc_with(&mut self, v: Var, f: impl FnOnce(&mut Matrix)) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let (r, c) = self.nodes[v.0].value.shape();
        let slot = self.grads[v.0].get_or_insert_with(|| Matrix::zeros(r, c));
        f(slot);
    }

    fn propagate(&mut self, idx: usize, g: &Matrix) {
        // Temporarily take the op out so we can borrow the rest of the graph.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if self.ng(a) {
                    let bv = &self.nodes[b.0].value;
                    let mut ga = Matrix::zeros(g.rows(), bv.rows());
                    gemm(g, false, bv, true, &mut ga, 0.0);
                    self.acc(a, ga);
                }
                if self.ng(b) {
                    let av = &self.nodes[a.0].value;
                    let mut gb = Matrix::zeros(av.cols(), g.cols());
                    gemm(av, true, g, false, &mut gb, 0.0);
                    self.acc(b, gb);
                }
            }
            Op::Add(a, b) => {
                self.acc(*a, g.clone());
                self.acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                self.acc(*a, g.clone());
                if self.ng(*row) {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, x) in gr.row_mut(0).iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                    self.acc(*row, gr);
                }
            }
            Op::Sub(a, b) => {
                self.acc(*a, g.clone());
                if self.ng(*b) {
                    self.acc(*b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.ng(a) {
                    let bv = &self.nodes[b.0].value;
                    let d = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    let m = Matrix::from_vec(g.rows(), g.cols(), d);
                    self.acc(a, m);
                }
                if self.ng(b) {
                    let av = &self.nodes[a.0].value;
                    let d = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    let m = Matrix::from_vec(g.rows(), g.cols(), d);
                    self.acc(b, m);
                }
            }
            Op::MulCol(a, col) => {
                let (a, col) = (*a, *col);
                if self.ng(a) {
                    let cv = &self.nodes[col.0].value;
                    let mut m = g.clone();
                    for r in 0..m.rows() {
                        let k = cv.get(r, 0);
                        for x in m.row_mut(r) {
                            *x *= k;
                        }
                    }
                    self.acc(a, m);
                }
                if self.ng(col) {
                    let av = &self.nodes[a.0].value;
                    let m = Matrix::from_fn(g.rows(), 1, |r, _| {
                        g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum()
                    });
                    self.acc(col, m);
                }
            }
            Op::Scale(a, k) => {
                let k = *k;
                self.acc(*a, g.map(|x| x * k));
            }
            Op::AddScalar(a) => self.acc(*a, g.clone()),
            Op::Relu(a) => {
                let av = &self.nodes[a.0].value;
                let d = g.data().iter().zip(av.data()).map(|(x, y)| if *y > 0.0 { *x } else { 0.0 }).collect();
                let m = Matrix::from_vec(g.rows(), g.cols(), d);
                self.acc(*a, m);
            }
            Op::LeakyRelu(a, slope) => {
                let av = &self.nodes[a.0].value;
                let d = g
                    .data()
                    .iter()
                    .zip(av.data())
                    .map(|(x, y)| if *y > 0.0 { *x } else { slope * x })
                    .collect();
                let m = Matrix::from_vec(g.rows(), g.cols(), d);
                self.acc(*a, m);
            }
            Op::Tanh(a) => {
                let out = &self.nodes[idx].value;
                let d = g.data().iter().zip(out.data()).map(|(x, y)| x * (1.0 - y * y)).collect();
                let m = Matrix::from_vec(g.rows(), g.cols(), d);
                self.acc(*a, m);
            }
            Op::Sigmoid(a) => {
                let out = &self.nodes[idx].value;
                let d = g.data().iter().zip(out.data()).map(|(x, y)| x * y * (1.0 - y)).collect();
                let m = Matrix::from_vec(g.rows(), g.cols(), d);
                self.acc(*a, m);
            }
            Op::Log(a) => {
                let av = &self.nodes[a.0].value;
                let d = g.data().iter().zip(av.data()).map(|(x, y)| x / y).collect();
                let m = Matrix::from_vec(g.rows(), g.cols(), d);
                self.acc(*a, m);
            }
            Op::Exp(a) => {
                let out = &self.nodes[idx].value;
                let d = g.data().iter().zip(out.data()).map(|(x, y)| x * y).collect();
                let m = Matrix::from_vec(g.rows(), g.cols(), d);
                self.acc(*a, m);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.nodes[p.0].value.cols();
                    if self.ng(p) {
                        let m = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, off + c));
                        self.acc(p, m);
                    }
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let start = *start;
                self.acc_with(*a, |ga| {
                    for r in 0..g.rows() {
                        let w = g.cols();
                        for (dst, x) in ga.row_mut(r)[start..start + w].iter_mut().zip(g.row(r)) {
                            *dst += x;
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                let c = g.cols();
                for &p in parts {
                    let h = self.nodes[p.0].value.rows();
                    if self.ng(p) {
                        let m = Matrix::from_vec(h, c, g.data()[off * c..(off + h) * c].to_vec());
                        self.acc(p, m);
                    }
                    off += h;
                }
            }
            Op::SliceRows(a, start) => {
                let start = *start;
                self.acc_with(*a, |ga| {
                    let c = g.cols();
                    for (dst, x) in ga.data_mut()[start * c..start * c + g.len()].iter_mut().zip(g.data()) {
                        *dst += x;
                    }
                });
            }
            Op::GatherRows(a, index) => {
                self.acc_with(*a, |ga| {
                    for (r, &i) in index.iter().enumerate() {
                        for (dst, x) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                            *dst += x;
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                let (r, c) = self.nodes[a.0].value.shape();
                self.acc(*a, g.clone().reshape(r, c));
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[idx].value;
                let mut m = Matrix::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((o, gy), yy) in m.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = yy * (gy - dot);
                    }
                }
                self.acc(*a, m);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &self.nodes[idx].value;
                let mut m = Matrix::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let total: f64 = g.row(r).iter().sum();
                    for ((o, gy), ly) in m.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = gy - ly.exp() * total;
                    }
                }
                self.acc(*a, m);
            }
            Op::PickCols(a, index) => {
                self.acc_with(*a, |ga| {
                    for (r, &c) in index.iter().enumerate() {
                        let w = ga.cols();
                        ga.data_mut()[r * w + c] += g.get(r, 0);
                    }
                });
            }
            Op::SumAll(a) => {
                let (r, c) = self.nodes[a.0].value.shape();
                self.acc(*a, Matrix::filled(r, c, g.get(0, 0)));
            }
            Op::SumCols(a) => {
                let (r, c) = self.nodes[a.0].value.shape();
                self.acc(*a, Matrix::from_fn(r, c, |i, _| g.get(i, 0)));
            }
            Op::StraightThrough(a) => self.acc(*a, g.clone()),
            Op::Attention { q, k, v, mask, shape, weights, exps, norms } => {
                let grads = attention_backward(
                    g,
                    &self.nodes[q.0].value,
                    &self.nodes[k.0].value,
                    &self.nodes[v.0].value,
                    &self.nodes[mask.0].value,
                    shape,
                    weights,
                    exps,
                    norms,
                );
                self.acc(*q, grads.0);
                self.acc(*k, grads.1);
                self.acc(*v, grads.2);
                self.acc(*mask, grads.3);
            }
        }
        self.nodes[idx].op = op;
    }
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

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in row.iter_mut() {
        *x /= s;
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

type AttentionForward = (Vec<f64>, Vec<f64>, Vec<f64>, Matrix);

fn attention_forward(q: &Matrix, k: &Matrix, v: &Matrix, mask: &Matrix, s: &AttentionShape) -> AttentionForward {
    let rows = s.n_agents * s.batch;
    let slots = s.slots();
    assert_eq!(q.shape(), (rows, s.heads * s.key_dim), "attention query shape");
    assert_eq!(k.shape(), (rows, s.heads * s.key_dim), "attention key shape");
    assert_eq!(v.shape(), (rows, s.heads * s.value_dim), "attention value shape");
    assert_eq!(mask.shape(), (rows, slots), "attention mask shape");
    let mut weights = vec![0.0; rows * s.heads * slots];
    let mut exps = vec![0.0; rows * s.heads * slots];
    let mut norms = vec![0.0; rows * s.heads];
    let mut out = Matrix::zeros(rows, s.heads * s.value_dim);
    let mut scores = vec![0.0; slots];
    let mut terms = vec![0.0; slots];
    for i in 0..s.n_agents {
        for b in 0..s.batch {
            let r = i * s.batch + b;
            let m = mask.row(r);
            for h in 0..s.heads {
                let qh = &q.row(r)[h * s.key_dim..(h + 1) * s.key_dim];
                for (t, score) in scores.iter_mut().enumerate() {
                    let rj = AttentionShape::neighbour(i, t) * s.batch + b;
                    let kh = &k.row(rj)[h * s.key_dim..(h + 1) * s.key_dim];
                    *score = qh.iter().zip(kh).map(|(x, y)| x * y).sum::<f64>() / s.scale;
                }
                let smax = scores
                    .iter()
                    .zip(m)
                    .filter(|(_, &mt)| mt != 0.0)
                    .map(|(&sc, _)| sc)
                    .fold(f64::NEG_INFINITY, f64::max);
                let base = (r * s.heads + h) * slots;
                for t in 0..slots {
                    let e = if smax.is_finite() { (scores[t] - smax).min(MASKED_EXP_CAP).exp() } else { 0.0 };
                    exps[base + t] = e;
                    terms[t] = m[t] * e;
                }
                let z = order_invariant_sum(&mut terms.clone());
                norms[r * s.heads + h] = z;
                if z <= 0.0 {
                    continue;
                }
                for t in 0..slots {
                    weights[base + t] = m[t] * exps[base + t] / z;
                }
                let orow = out.row_mut(r);
                for d in 0..s.value_dim {
                    for (t, term) in terms.iter_mut().enumerate() {
                        let rj = AttentionShape::neighbour(i, t) * s.batch + b;
                        *term = weights[base + t] * v.get(rj, h * s.value_dim + d);
                    }
                    orow[h * s.value_dim + d] = order_invariant_sum(&mut terms);
                }
            }
        }
    }
    (weights, exps, norms, out)
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    g: &Matrix,
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    mask: &Matrix,
    s: &AttentionShape,
    weights: &[f64],
    exps: &[f64],
    norms: &[f64],
) -> (Matrix, Matrix, Matrix, Matrix) {
    let slots = s.slots();
    let mut gq = Matrix::zeros(q.rows(), q.cols());
    let mut gk = Matrix::zeros(k.rows(), k.cols());
    let mut gv = Matrix::zeros(v.rows(), v.cols());
    let mut gm = Matrix::zeros(mask.rows(), mask.cols());
    let mut dw = vec![0.0; slots];
    for i in 0..s.n_agents {
        for b in 0..s.batch {
            let r = i * s.batch + b;
            for h in 0..s.heads {
                let z = norms[r * s.heads + h];
                if z <= 0.0 {
                    continue;
                }
                let base = (r * s.heads + h) * slots;
                let gout = &g.row(r)[h * s.value_dim..(h + 1) * s.value_dim];
                for (t, dwt) in dw.iter_mut().enumerate() {
                    let rj = AttentionShape::neighbour(i, t) * s.batch + b;
                    let vh = &v.row(rj)[h * s.value_dim..(h + 1) * s.value_dim];
                    *dwt = gout.iter().zip(vh).map(|(a, c)| a * c).sum();
                    let w = weights[base + t];
                    if w != 0.0 {
                        let gvh = &mut gv.row_mut(rj)[h * s.value_dim..(h + 1) * s.value_dim];
                        for (dst, go) in gvh.iter_mut().zip(gout) {
                            *dst += w * go;
                        }
                    }
                }
                let wdw: f64 = (0..slots).map(|t| weights[base + t] * dw[t]).sum();
                for t in 0..slots {
                    let centred = dw[t] - wdw;
                    gm.data_mut()[r * slots + t] += exps[base + t] / z * centred;
                    let ds = weights[base + t] * centred / s.scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let rj = AttentionShape::neighbour(i, t) * s.batch + b;
                    for d in 0..s.key_dim {
                        let c = h * s.key_dim + d;
                        let qv = q.get(r, c);
                        let kv = k.get(rj, c);
                        gq.data_mut()[r * q.cols() + c] += ds * kv;
                        gk.data_mut()[rj * k.cols() + c] += ds * qv;
                    }
                }
            }
        }
    }
    (gq, gk, gv, gm)
}
