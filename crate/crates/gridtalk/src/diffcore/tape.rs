//! The computation tape: whole-tensor nodes, reverse-order backward sweep.

use super::params::{GradAccum, ParamId, ParamStore};
use super::{softmax, DiffError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Sampling behaviour for stochastic nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sample,
    Argmax,
}

enum Op {
    Leaf { param: Option<ParamId> },
    /// y = W x + b
    Affine { w: NodeId, x: NodeId, b: NodeId },
    Tanh { x: NodeId },
    Softmax { x: NodeId },
    /// scalar log softmax(x)[idx]; probs cached for backward
    LogSoftmaxPick { x: NodeId, idx: usize, probs: Vec<f64> },
    /// forward: exact one-hot at idx; backward: soft path through softmax(logits)
    StraightThrough { logits: NodeId, probs: Vec<f64> },
    Dot { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    MulElem { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    Concat { parts: Vec<NodeId> },
    Sum { x: NodeId },
    /// rows of y are tanh(W x_i + b) for rows x_i of x
    RowsAffineTanh { x: NodeId, w: NodeId, b: NodeId },
    /// out_i = scale * dot(z, row_i(cells))
    ScaledDots { z: NodeId, cells: NodeId, scale: f64 },
    /// out = sum_i weights_i * row_i(cells)
    ConvexCombine { weights: NodeId, cells: NodeId },
}

struct Node {
    value: Vec<f64>,
    shape: (usize, usize),
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// A define-by-run computation graph over `f64` vectors and matrices.
///
/// Vectors have shape `(n, 1)`, scalars `(1, 1)`. A tape is built per
/// episode (or per training batch item), consumed by one `backward` call,
/// and dropped.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Vec<f64>, shape: (usize, usize), requires_grad: bool, op: Op) -> NodeId {
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value produced on tape"
        );
        debug_assert_eq!(value.len(), shape.0 * shape.1);
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { value, shape, grad, requires_grad, op });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf that gradients do not flow into.
    pub fn constant(&mut self, shape: (usize, usize), data: Vec<f64>) -> NodeId {
        self.push(data, shape, false, Op::Leaf { param: None })
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> NodeId {
        let n = data.len();
        self.constant((n, 1), data)
    }

    /// A leaf that gradients flow into (finite-difference checks, toys).
    pub fn input(&mut self, shape: (usize, usize), data: Vec<f64>) -> NodeId {
        self.push(data, shape, true, Op::Leaf { param: None })
    }

    pub fn input_vec(&mut self, data: Vec<f64>) -> NodeId {
        let n = data.len();
        self.input((n, 1), data)
    }

    /// A leaf bound to a named parameter; its gradient is collected by
    /// [`Tape::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let shape = store.shape(id);
        let data = store.value(id).to_vec();
        self.push(data, shape, true, Op::Leaf { param: Some(id) })
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].shape
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    fn rows(&self, id: NodeId) -> usize {
        self.nodes[id.0].shape.0
    }

    fn needs_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn expect_vec(&self, id: NodeId, op: &'static str) -> Result<usize, DiffError> {
        let (r, c) = self.shape(id);
        if c != 1 {
            return Err(DiffError::ShapeMismatch { op, detail: format!("expected vector, got {r}x{c}") });
        }
        Ok(r)
    }

    /// y = W x + b with W of shape (m, n), x a length-n vector, b length m.
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (m, n) = self.shape(w);
        let xn = self.expect_vec(x, "affine")?;
        let bn = self.expect_vec(b, "affine")?;
        if xn != n || bn != m {
            return Err(DiffError::ShapeMismatch {
                op: "affine",
                detail: format!("W {m}x{n}, x {xn}, b {bn}"),
            });
        }
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let bv = &self.nodes[b.0].value;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let row = &wv[i * n..(i + 1) * n];
            let mut acc = bv[i];
            for j in 0..n {
                acc += row[j] * xv[j];
            }
            y[i] = acc;
        }
        let rg = self.needs_grad(&[w, x, b]);
        Ok(self.push(y, (m, 1), rg, Op::Affine { w, x, b }))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let y: Vec<f64> = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        let shape = self.shape(x);
        let rg = self.needs_grad(&[x]);
        self.push(y, shape, rg, Op::Tanh { x })
    }

    pub fn softmax_node(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        let n = self.expect_vec(x, "softmax")?;
        let y = softmax(&self.nodes[x.0].value);
        let rg = self.needs_grad(&[x]);
        Ok(self.push(y, (n, 1), rg, Op::Softmax { x }))
    }

    /// Scalar `log softmax(x)[idx]`.
    pub fn log_softmax_pick(&mut self, x: NodeId, idx: usize) -> Result<NodeId, DiffError> {
        let n = self.expect_vec(x, "log_softmax_pick")?;
        if idx >= n {
            return Err(DiffError::ShapeMismatch {
                op: "log_softmax_pick",
                detail: format!("index {idx} out of {n}"),
            });
        }
        let probs = softmax(&self.nodes[x.0].value);
        let val = probs[idx].max(f64::MIN_POSITIVE).ln();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(vec![val], (1, 1), rg, Op::LogSoftmaxPick { x, idx, probs }))
    }

    /// Cross-entropy of a label under the logits: `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId, DiffError> {
        let lp = self.log_softmax_pick(logits, label)?;
        Ok(self.scale(lp, -1.0))
    }

    /// Categorical sample (or argmax) emitted as an exact one-hot vector.
    ///
    /// The backward pass routes incoming gradients through the softmax of the
    /// logits, as if the forward value had been the soft distribution.
    /// Argmax ties break toward the lowest index. Returns the node and the
    /// chosen index.
    pub fn categorical_straight_through(
        &mut self,
        logits: NodeId,
        rng: &mut ChaCha8Rng,
        mode: Mode,
    ) -> Result<(NodeId, usize), DiffError> {
        let n = self.expect_vec(logits, "categorical_straight_through")?;
        if self.nodes[logits.0].value.iter().any(|v| !v.is_finite()) {
            return Err(DiffError::NonFiniteLogits);
        }
        let probs = softmax(&self.nodes[logits.0].value);
        let idx = match mode {
            Mode::Argmax => argmax(&probs),
            Mode::Sample => sample_index(rng, &probs),
        };
        let mut onehot = vec![0.0; n];
        onehot[idx] = 1.0;
        let rg = self.needs_grad(&[logits]);
        let node = self.push(onehot, (n, 1), rg, Op::StraightThrough { logits, probs });
        Ok((node, idx))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let na = self.expect_vec(a, "dot")?;
        let nb = self.expect_vec(b, "dot")?;
        if na != nb {
            return Err(DiffError::ShapeMismatch { op: "dot", detail: format!("{na} vs {nb}") });
        }
        let v = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .sum();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(vec![v], (1, 1), rg, Op::Dot { a, b }))
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        opname: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, DiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(DiffError::ShapeMismatch {
                op: opname,
                detail: format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            });
        }
        let v: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a);
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(v, shape, rg, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary(a, b, "mul_elem", |x, y| x * y, Op::MulElem { a, b })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v: Vec<f64> = self.nodes[x.0].value.iter().map(|&t| t * c).collect();
        let shape = self.shape(x);
        let rg = self.needs_grad(&[x]);
        self.push(v, shape, rg, Op::Scale { x, c })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, DiffError> {
        let mut data = Vec::new();
        for &p in parts {
            self.expect_vec(p, "concat")?;
            data.extend_from_slice(&self.nodes[p.0].value);
        }
        let n = data.len();
        let rg = self.needs_grad(parts);
        Ok(self.push(data, (n, 1), rg, Op::Concat { parts: parts.to_vec() }))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v: f64 = self.nodes[x.0].value.iter().sum();
        let rg = self.needs_grad(&[x]);
        self.push(vec![v], (1, 1), rg, Op::Sum { x })
    }

    /// Apply `tanh(W x_i + b)` to every row `x_i` of a matrix input.
    pub fn rows_affine_tanh(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (rows, xin) = self.shape(x);
        let (m, n) = self.shape(w);
        let bn = self.expect_vec(b, "rows_affine_tanh")?;
        if n != xin || bn != m {
            return Err(DiffError::ShapeMismatch {
                op: "rows_affine_tanh",
                detail: format!("x {rows}x{xin}, W {m}x{n}, b {bn}"),
            });
        }
        let mut y = vec![0.0; rows * m];
        {
            let xv = &self.nodes[x.0].value;
            let wv = &self.nodes[w.0].value;
            let bv = &self.nodes[b.0].value;
            for r in 0..rows {
                let xrow = &xv[r * n..(r + 1) * n];
                for i in 0..m {
                    let wrow = &wv[i * n..(i + 1) * n];
                    let mut acc = bv[i];
                    for j in 0..n {
                        acc += wrow[j] * xrow[j];
                    }
                    y[r * m + i] = acc.tanh();
                }
            }
        }
        let rg = self.needs_grad(&[x, w, b]);
        Ok(self.push(y, (rows, m), rg, Op::RowsAffineTanh { x, w, b }))
    }

    /// `out_i = scale * dot(z, row_i(cells))` for every row of `cells`.
    pub fn scaled_dots(&mut self, z: NodeId, cells: NodeId, scale: f64) -> Result<NodeId, DiffError> {
        let zn = self.expect_vec(z, "scaled_dots")?;
        let (rows, d) = self.shape(cells);
        if d != zn {
            return Err(DiffError::ShapeMismatch {
                op: "scaled_dots",
                detail: format!("z {zn}, cells {rows}x{d}"),
            });
        }
        let zv = &self.nodes[z.0].value;
        let cv = &self.nodes[cells.0].value;
        let mut y = vec![0.0; rows];
        for r in 0..rows {
            let row = &cv[r * d..(r + 1) * d];
            y[r] = scale * row.iter().zip(zv).map(|(a, b)| a * b).sum::<f64>();
        }
        let rg = self.needs_grad(&[z, cells]);
        Ok(self.push(y, (rows, 1), rg, Op::ScaledDots { z, cells, scale }))
    }

    /// `out = sum_i weights_i * row_i(cells)`.
    pub fn convex_combine(&mut self, weights: NodeId, cells: NodeId) -> Result<NodeId, DiffError> {
        let wn = self.expect_vec(weights, "convex_combine")?;
        let (rows, d) = self.shape(cells);
        if rows != wn {
            return Err(DiffError::ShapeMismatch {
                op: "convex_combine",
                detail: format!("weights {wn}, cells {rows}x{d}"),
            });
        }
        let wv = &self.nodes[weights.0].value;
        let cv = &self.nodes[cells.0].value;
        let mut y = vec![0.0; d];
        for r in 0..rows {
            let row = &cv[r * d..(r + 1) * d];
            let wr = wv[r];
            for j in 0..d {
                y[j] += wr * row[j];
            }
        }
        let rg = self.needs_grad(&[weights, cells]);
        Ok(self.push(y, (d, 1), rg, Op::ConvexCombine { weights, cells }))
    }

    /// Seed the loss gradient with 1 and sweep the tape in reverse.
    pub fn backward(&mut self, loss: NodeId) {
        debug_assert_eq!(self.nodes[loss.0].value.len(), 1, "backward needs a scalar loss");
        self.nodes[loss.0].grad[0] += 1.0;
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            // take the node's grad to satisfy the borrow checker while
            // writing into parent grads
            let grad = std::mem::take(&mut self.nodes[i].grad);
            self.propagate(i, &grad);
            self.nodes[i].grad = grad;
        }
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // split borrows: everything we touch as a parent has index < i
        let (parents, rest) = self.nodes.split_at_mut(i);
        let node = &rest[0];
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Affine { w, x, b } => {
                let (m, n) = parents[w.0].shape;
                let xv: Vec<f64> = parents[x.0].value.clone();
                if parents[w.0].requires_grad {
                    let gw = &mut parents[w.0].grad;
                    for ii in 0..m {
                        for j in 0..n {
                            gw[ii * n + j] += g[ii] * xv[j];
                        }
                    }
                }
                if parents[x.0].requires_grad {
                    let wv: Vec<f64> = parents[w.0].value.clone();
                    let gx = &mut parents[x.0].grad;
                    for ii in 0..m {
                        for j in 0..n {
                            gx[j] += g[ii] * wv[ii * n + j];
                        }
                    }
                }
                if parents[b.0].requires_grad {
                    let gb = &mut parents[b.0].grad;
                    for ii in 0..m {
                        gb[ii] += g[ii];
                    }
                }
            }
            Op::Tanh { x } => {
                if parents[x.0].requires_grad {
                    for (j, (&gj, &yj)) in g.iter().zip(&node.value).enumerate() {
                        parents[x.0].grad[j] += gj * (1.0 - yj * yj);
                    }
                }
            }
            Op::Softmax { x } => {
                if parents[x.0].requires_grad {
                    let y = &node.value;
                    let inner: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    for j in 0..y.len() {
                        parents[x.0].grad[j] += y[j] * (g[j] - inner);
                    }
                }
            }
            Op::LogSoftmaxPick { x, idx, probs } => {
                if parents[x.0].requires_grad {
                    let gs = g[0];
                    for j in 0..probs.len() {
                        let delta = if j == *idx { 1.0 } else { 0.0 };
                        parents[x.0].grad[j] += gs * (delta - probs[j]);
                    }
                }
            }
            Op::StraightThrough { logits, probs } => {
                if parents[logits.0].requires_grad {
                    let inner: f64 = g.iter().zip(probs).map(|(a, b)| a * b).sum();
                    for j in 0..probs.len() {
                        parents[logits.0].grad[j] += probs[j] * (g[j] - inner);
                    }
                }
            }
            Op::Dot { a, b } => {
                let gs = g[0];
                if parents[a.0].requires_grad {
                    let bv: Vec<f64> = parents[b.0].value.clone();
                    for (j, &bj) in bv.iter().enumerate() {
                        parents[a.0].grad[j] += gs * bj;
                    }
                }
                if parents[b.0].requires_grad {
                    let av: Vec<f64> = parents[a.0].value.clone();
                    for (j, &aj) in av.iter().enumerate() {
                        parents[b.0].grad[j] += gs * aj;
                    }
                }
            }
            Op::Add { a, b } => {
                for &p in &[*a, *b] {
                    if parents[p.0].requires_grad {
                        for (j, &gj) in g.iter().enumerate() {
                            parents[p.0].grad[j] += gj;
                        }
                    }
                }
            }
            Op::Sub { a, b } => {
                if parents[a.0].requires_grad {
                    for (j, &gj) in g.iter().enumerate() {
                        parents[a.0].grad[j] += gj;
                    }
                }
                if parents[b.0].requires_grad {
                    for (j, &gj) in g.iter().enumerate() {
                        parents[b.0].grad[j] -= gj;
                    }
                }
            }
            Op::MulElem { a, b } => {
                if parents[a.0].requires_grad {
                    let bv: Vec<f64> = parents[b.0].value.clone();
                    for (j, &gj) in g.iter().enumerate() {
                        parents[a.0].grad[j] += gj * bv[j];
                    }
                }
                if parents[b.0].requires_grad {
                    let av: Vec<f64> = parents[a.0].value.clone();
                    for (j, &gj) in g.iter().enumerate() {
                        parents[b.0].grad[j] += gj * av[j];
                    }
                }
            }
            Op::Scale { x, c } => {
                if parents[x.0].requires_grad {
                    let c = *c;
                    for (j, &gj) in g.iter().enumerate() {
                        parents[x.0].grad[j] += gj * c;
                    }
                }
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let len = parents[p.0].value.len();
                    if parents[p.0].requires_grad {
                        for j in 0..len {
                            parents[p.0].grad[j] += g[offset + j];
                        }
                    }
                    offset += len;
                }
            }
            Op::Sum { x } => {
                if parents[x.0].requires_grad {
                    let gs = g[0];
                    for gj in parents[x.0].grad.iter_mut() {
                        *gj += gs;
                    }
                }
            }
            Op::RowsAffineTanh { x, w, b } => {
                let (rows, n) = parents[x.0].shape;
                let m = parents[w.0].shape.0;
                let y = &node.value;
                // e[r][i] = g[r][i] * (1 - y[r][i]^2)
                let mut e = vec![0.0; rows * m];
                for r in 0..rows {
                    for i in 0..m {
                        let yv = y[r * m + i];
                        e[r * m + i] = g[r * m + i] * (1.0 - yv * yv);
                    }
                }
                if parents[w.0].requires_grad {
                    let xv: Vec<f64> = parents[x.0].value.clone();
                    let gw = &mut parents[w.0].grad;
                    for r in 0..rows {
                        let xrow = &xv[r * n..(r + 1) * n];
                        for i in 0..m {
                            let er = e[r * m + i];
                            if er != 0.0 {
                                for j in 0..n {
                                    gw[i * n + j] += er * xrow[j];
                                }
                            }
                        }
                    }
                }
                if parents[b.0].requires_grad {
                    let gb = &mut parents[b.0].grad;
                    for r in 0..rows {
                        for i in 0..m {
                            gb[i] += e[r * m + i];
                        }
                    }
                }
                if parents[x.0].requires_grad {
                    let wv: Vec<f64> = parents[w.0].value.clone();
                    let gx = &mut parents[x.0].grad;
                    for r in 0..rows {
                        for i in 0..m {
                            let er = e[r * m + i];
                            if er != 0.0 {
                                for j in 0..n {
                                    gx[r * n + j] += er * wv[i * n + j];
                                }
                            }
                        }
                    }
                }
            }
            Op::ScaledDots { z, cells, scale } => {
                let (rows, d) = parents[cells.0].shape;
                let scale = *scale;
                if parents[z.0].requires_grad {
                    let cv: Vec<f64> = parents[cells.0].value.clone();
                    let gz = &mut parents[z.0].grad;
                    for r in 0..rows {
                        let gr = g[r] * scale;
                        if gr != 0.0 {
                            for j in 0..d {
                                gz[j] += gr * cv[r * d + j];
                            }
                        }
                    }
                }
                if parents[cells.0].requires_grad {
                    let zv: Vec<f64> = parents[z.0].value.clone();
                    let gc = &mut parents[cells.0].grad;
                    for r in 0..rows {
                        let gr = g[r] * scale;
                        for j in 0..d {
                            gc[r * d + j] += gr * zv[j];
                        }
                    }
                }
            }
            Op::ConvexCombine { weights, cells } => {
                let (rows, d) = parents[cells.0].shape;
                if parents[weights.0].requires_grad {
                    let cv: Vec<f64> = parents[cells.0].value.clone();
                    let gw = &mut parents[weights.0].grad;
                    for r in 0..rows {
                        let mut acc = 0.0;
                        for j in 0..d {
                            acc += g[j] * cv[r * d + j];
                        }
                        gw[r] += acc;
                    }
                }
                if parents[cells.0].requires_grad {
                    let wv: Vec<f64> = parents[weights.0].value.clone();
                    let gc = &mut parents[cells.0].grad;
                    for r in 0..rows {
                        let wr = wv[r];
                        if wr != 0.0 {
                            for j in 0..d {
                                gc[r * d + j] += wr * g[j];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Move accumulated gradients of parameter leaves into `acc`.
    pub fn accumulate_param_grads(&self, acc: &mut GradAccum, scale: f64) {
        for node in &self.nodes {
            if let Op::Leaf { param: Some(id) } = node.op {
                acc.add(id, &node.grad, scale);
            }
        }
    }
}

/// Lowest-index argmax.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF categorical sample.
pub fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn affine_identity_passes_input_through() {
        let mut tape = Tape::new();
        let w = tape.constant((3, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let b = tape.constant_vec(vec![0.0; 3]);
        let x = tape.input_vec(vec![0.5, -1.5, 2.0]);
        let y = tape.affine(w, x, b).unwrap();
        assert_eq!(tape.value(y), &[0.5, -1.5, 2.0]);
    }

    #[test]
    fn affine_zero_weights_returns_bias() {
        let mut tape = Tape::new();
        let w = tape.constant((2, 3), vec![0.0; 6]);
        let b = tape.constant_vec(vec![0.7, -0.2]);
        let x = tape.input_vec(vec![3.0, 4.0, 5.0]);
        let y = tape.affine(w, x, b).unwrap();
        let t = tape.tanh(y);
        assert!((tape.value(t)[0] - 0.7f64.tanh()).abs() < 1e-15);
        assert!((tape.value(t)[1] - (-0.2f64).tanh()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_k() {
        let mut tape = Tape::new();
        let logits = tape.input_vec(vec![0.0; 4]);
        let ce = tape.cross_entropy(logits, 2).unwrap();
        assert!((tape.scalar(ce) - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut tape = Tape::new();
        let w = tape.constant((2, 3), vec![0.0; 6]);
        let b = tape.constant_vec(vec![0.0; 2]);
        let x = tape.input_vec(vec![1.0, 2.0]);
        assert!(matches!(tape.affine(w, x, b), Err(DiffError::ShapeMismatch { .. })));
    }

    #[test]
    fn straight_through_emits_exact_onehot() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let logits = tape.input_vec(vec![0.3, -0.7, 1.2, 0.0]);
        let (y, idx) = tape.categorical_straight_through(logits, &mut rng, Mode::Sample).unwrap();
        let v = tape.value(y);
        assert_eq!(v.iter().filter(|&&b| b == 1.0).count(), 1);
        assert_eq!(v.iter().filter(|&&b| b == 0.0).count(), 3);
        assert_eq!(v[idx], 1.0);
    }

    #[test]
    fn straight_through_argmax_breaks_ties_low() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let logits = tape.input_vec(vec![1.0, 1.0, 1.0]);
        let (_, idx) = tape.categorical_straight_through(logits, &mut rng, Mode::Argmax).unwrap();
        assert_eq!(idx, 0);
    }

    #[test]
    fn straight_through_sample_concentrates_on_dominant_logit() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0usize;
        let n = 10_000;
        for _ in 0..n {
            let mut tape = Tape::new();
            let logits = tape.input_vec(vec![10.0, -10.0, -10.0, -10.0]);
            let (_, idx) = tape.categorical_straight_through(logits, &mut rng, Mode::Sample).unwrap();
            if idx == 0 {
                hits += 1;
            }
        }
        assert!(hits as f64 / n as f64 > 0.999, "hit rate {}", hits as f64 / n as f64);
    }

    #[test]
    fn straight_through_rejects_non_finite() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let logits = tape.constant_vec(vec![f64::NAN, 0.0]);
        assert!(matches!(
            tape.categorical_straight_through(logits, &mut rng, Mode::Argmax),
            Err(DiffError::NonFiniteLogits)
        ));
    }

    /// The straight-through backward must match an all-soft graph where the
    /// one-hot is replaced by softmax(logits), for a linear downstream head.
    #[test]
    fn straight_through_gradient_matches_soft_path() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let logits_data = vec![0.4, -1.1, 0.9, 0.2];
        let head = vec![0.7, -0.3, 0.5, 1.1];

        let mut hard = Tape::new();
        let logits = hard.input_vec(logits_data.clone());
        let (onehot, _) = hard.categorical_straight_through(logits, &mut rng, Mode::Argmax).unwrap();
        let h = hard.constant_vec(head.clone());
        let loss = hard.dot(onehot, h).unwrap();
        hard.backward(loss);
        let hard_grad = hard.grad(logits).to_vec();

        let mut soft = Tape::new();
        let logits_s = soft.input_vec(logits_data);
        let probs = soft.softmax_node(logits_s).unwrap();
        let h = soft.constant_vec(head);
        let loss_s = soft.dot(probs, h).unwrap();
        soft.backward(loss_s);
        let soft_grad = soft.grad(logits_s).to_vec();

        for (a, b) in hard_grad.iter().zip(&soft_grad) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}
