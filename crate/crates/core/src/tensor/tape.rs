//! Reverse-mode automatic differentiation over dense arrays.
//!
//! A `Tape` owns a dynamically built computation graph: every operation
//! appends a node holding its output array and a backward rule. Creation
//! order is a topological order, so `backward` is a single reverse sweep
//! that visits each node exactly once. Gradients for named parameter
//! leaves can be collected afterwards, keyed by parameter path.
//!
//! Alongside the dense ops this module carries the segment (per
//! neighborhood) operations graph message passing needs: reductions and
//! softmax applied independently within each destination node's group of
//! incoming edges, with a fixed (ascending edge index) reduction order.

use std::collections::BTreeMap;

use super::array::{matmul_into, Array};
use super::error::TensorError;
use super::rng::SplitRng;

/// Handle to a value on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueId(pub(crate) usize);

/// Forward/eval switch: dropout and batch statistics differ between the two.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Element-wise activation kinds. `LeakyRelu` uses slope 0.2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Elu,
    LeakyRelu,
    Sigmoid,
    Tanh,
}

pub const LEAKY_SLOPE: f64 = 0.2;

/// Maps each edge slot to its destination node; the per-node incoming-edge
/// groups are the segments reductions and softmax run over.
#[derive(Clone, Debug)]
pub struct SegmentIndex {
    target_of: Vec<usize>,
    segment_count: usize,
}

impl SegmentIndex {
    pub fn new(target_of: Vec<usize>, segment_count: usize) -> Result<Self, TensorError> {
        for (slot, &t) in target_of.iter().enumerate() {
            if t >= segment_count {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_index",
                    index: t,
                    bound: segment_count,
                    slot,
                });
            }
        }
        Ok(SegmentIndex {
            target_of,
            segment_count,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.target_of.len()
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn targets(&self) -> &[usize] {
        &self.target_of
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    Max,
}

enum Op {
    Leaf,
    Matmul { a: ValueId, b: ValueId },
    /// C = A * B^T, with B stored [n x k].
    MatmulNT { a: ValueId, b: ValueId },
    Add { a: ValueId, b: ValueId },
    Sub { a: ValueId, b: ValueId },
    Mul { a: ValueId, b: ValueId },
    AddRow { a: ValueId, r: ValueId },
    MulRow { a: ValueId, r: ValueId },
    ScaleRows { a: ValueId, s: ValueId },
    Scale { a: ValueId, c: f64 },
    ConcatRows { parts: Vec<ValueId> },
    ConcatCols { parts: Vec<ValueId> },
    SliceCols { a: ValueId, start: usize },
    GatherRows { a: ValueId, ids: Vec<usize> },
    SegmentSum { a: ValueId, targets: Vec<usize> },
    SegmentMean { a: ValueId, targets: Vec<usize>, counts: Vec<usize> },
    /// `argmax[seg * cols + c]` is the winning edge slot, `usize::MAX` if empty.
    SegmentMax { a: ValueId, argmax: Vec<usize> },
    SegmentSoftmax { a: ValueId, targets: Vec<usize>, segment_count: usize },
    SoftmaxRows { a: ValueId },
    Activation { a: ValueId, kind: Activation },
    Dropout { a: ValueId, mask: Vec<f64> },
    CrossEntropy { logits: ValueId, softmax: Vec<f64>, gold: Vec<usize> },
    MeanAxis0 { a: ValueId },
    SumAxis1 { a: ValueId },
    SumAll { a: ValueId },
    LayerNorm { x: ValueId, gamma: ValueId, beta: ValueId, xhat: Vec<f64>, inv_std: Vec<f64> },
    BatchNormTrain { x: ValueId, gamma: ValueId, beta: ValueId, xhat: Vec<f64>, inv_std: Vec<f64> },
}

struct Node {
    data: Array,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
    path: Option<String>,
}

/// A single forward pass worth of computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, v: ValueId) -> &Array {
        &self.nodes[v.0].data
    }

    /// Gradient buffer of a value after `backward`, if it received one.
    pub fn grad(&self, v: ValueId) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: ValueId) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, data: Array, requires_grad: bool, op: Op) -> ValueId {
        self.nodes.push(Node {
            data,
            grad: None,
            requires_grad,
            op,
            path: None,
        });
        ValueId(self.nodes.len() - 1)
    }

    fn any_grad(&self, ids: &[ValueId]) -> bool {
        ids.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ── Leaves ──────────────────────────────────────────────────────

    pub fn leaf(&mut self, data: Array, requires_grad: bool) -> ValueId {
        self.push(data, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, data: Array) -> ValueId {
        self.push(data, false, Op::Leaf)
    }

    /// Leaf recorded under a parameter path; `param_grads` picks it up later.
    pub fn named_leaf(&mut self, path: &str, data: Array, requires_grad: bool) -> ValueId {
        let id = self.push(data, requires_grad, Op::Leaf);
        self.nodes[id.0].path = Some(path.to_string());
        id
    }

    // ── Dense operations ────────────────────────────────────────────

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, TensorError> {
        let (m, k) = self.data(a).shape();
        let (k2, n) = self.data(b).shape();
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.data(a).shape_string(),
                rhs: self.data(b).shape_string(),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&mut out, self.data(a).data(), self.data(b).data(), m, k, n, false, false);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Array::from_vec(m, n, out), rg, Op::Matmul { a, b }))
    }

    /// `a [m x k]` times `b^T` where `b` is stored `[n x k]`.
    pub fn matmul_nt(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, TensorError> {
        let (m, k) = self.data(a).shape();
        let (n, k2) = self.data(b).shape();
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.data(a).shape_string(),
                rhs: self.data(b).shape_string(),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&mut out, self.data(a).data(), self.data(b).data(), m, k, n, false, true);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Array::from_vec(m, n, out), rg, Op::MatmulNT { a, b }))
    }

    fn zip_same_shape(
        &mut self,
        op_name: &'static str,
        a: ValueId,
        b: ValueId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<ValueId, TensorError> {
        if self.data(a).shape() != self.data(b).shape() {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                lhs: self.data(a).shape_string(),
                rhs: self.data(b).shape_string(),
            });
        }
        let (r, c) = self.data(a).shape();
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b).iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Array::from_vec(r, c, data), rg, op))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, TensorError> {
        self.zip_same_shape("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, TensorError> {
        self.zip_same_shape("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, TensorError> {
        self.zip_same_shape("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// Broadcast add of a `[1 x d]` row vector to every row of `[n x d]`.
    pub fn add_row(&mut self, a: ValueId, r: ValueId) -> Result<ValueId, TensorError> {
        let (n, d) = self.data(a).shape();
        if self.data(r).shape() != (1, d) {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: self.data(a).shape_string(),
                rhs: self.data(r).shape_string(),
            });
        }
        let row = self.data(r).data().to_vec();
        let mut out = self.data(a).data().to_vec();
        for i in 0..n {
            for j in 0..d {
                out[i * d + j] += row[j];
            }
        }
        let rg = self.any_grad(&[a, r]);
        Ok(self.push(Array::from_vec(n, d, out), rg, Op::AddRow { a, r }))
    }

    /// Broadcast Hadamard product with a `[1 x d]` row vector.
    pub fn mul_row(&mut self, a: ValueId, r: ValueId) -> Result<ValueId, TensorError> {
        let (n, d) = self.data(a).shape();
        if self.data(r).shape() != (1, d) {
            return Err(TensorError::ShapeMismatch {
                op: "mul_row",
                lhs: self.data(a).shape_string(),
                rhs: self.data(r).shape_string(),
            });
        }
        let row = self.data(r).data().to_vec();
        let mut out = self.data(a).data().to_vec();
        for i in 0..n {
            for j in 0..d {
                out[i * d + j] *= row[j];
            }
        }
        let rg = self.any_grad(&[a, r]);
        Ok(self.push(Array::from_vec(n, d, out), rg, Op::MulRow { a, r }))
    }

    /// Scale each row of `[n x d]` by the matching entry of a `[n x 1]` column.
    pub fn scale_rows(&mut self, a: ValueId, s: ValueId) -> Result<ValueId, TensorError> {
        let (n, d) = self.data(a).shape();
        if self.data(s).shape() != (n, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                lhs: self.data(a).shape_string(),
                rhs: self.data(s).shape_string(),
            });
        }
        let col = self.data(s).data().to_vec();
        let mut out = self.data(a).data().to_vec();
        for i in 0..n {
            for j in 0..d {
                out[i * d + j] *= col[i];
            }
        }
        let rg = self.any_grad(&[a, s]);
        Ok(self.push(Array::from_vec(n, d, out), rg, Op::ScaleRows { a, s }))
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&mut self, a: ValueId, c: f64) -> ValueId {
        let data = self.data(a).map(|x| c * x);
        let rg = self.nodes[a.0].requires_grad;
        self.push(data, rg, Op::Scale { a, c })
    }

    /// Concatenate along axis 0 (stack rows). Column counts must agree.
    pub fn concat_rows(&mut self, parts: &[ValueId]) -> Result<ValueId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat_rows" });
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let d = self.data(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            if self.data(p).cols() != d {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.data(parts[0]).shape_string(),
                    rhs: self.data(p).shape_string(),
                });
            }
            rows += self.data(p).rows();
        }
        let mut out = Vec::with_capacity(rows * d);
        for &p in parts {
            out.extend_from_slice(self.data(p).data());
        }
        let rg = self.any_grad(parts);
        Ok(self.push(
            Array::from_vec(rows, d, out),
            rg,
            Op::ConcatRows { parts: parts.to_vec() },
        ))
    }

    /// Concatenate along axis 1 (widen rows). Row counts must agree.
    pub fn concat_cols(&mut self, parts: &[ValueId]) -> Result<ValueId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat_cols" });
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let n = self.data(parts[0]).rows();
        let mut width = 0;
        for &p in parts {
            if self.data(p).rows() != n {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.data(parts[0]).shape_string(),
                    rhs: self.data(p).shape_string(),
                });
            }
            width += self.data(p).cols();
        }
        let mut out = vec![0.0; n * width];
        let mut offset = 0;
        for &p in parts {
            let w = self.data(p).cols();
            let src = self.data(p).data();
            for i in 0..n {
                out[i * width + offset..i * width + offset + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let rg = self.any_grad(parts);
        Ok(self.push(
            Array::from_vec(n, width, out),
            rg,
            Op::ConcatCols { parts: parts.to_vec() },
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(
        &mut self,
        a: ValueId,
        start: usize,
        end: usize,
    ) -> Result<ValueId, TensorError> {
        let (n, d) = self.data(a).shape();
        if start >= end || end > d {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: end,
                bound: d,
                slot: start,
            });
        }
        let w = end - start;
        let src = self.data(a).data();
        let mut out = vec![0.0; n * w];
        for i in 0..n {
            out[i * w..(i + 1) * w].copy_from_slice(&src[i * d + start..i * d + end]);
        }
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(Array::from_vec(n, w, out), rg, Op::SliceCols { a, start }))
    }

    /// Select rows by index, duplicates allowed; backward scatter-adds.
    /// This is also the embedding lookup.
    pub fn gather_rows(&mut self, a: ValueId, ids: &[usize]) -> Result<ValueId, TensorError> {
        let (n, d) = self.data(a).shape();
        for (slot, &i) in ids.iter().enumerate() {
            if i >= n {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    bound: n,
                    slot,
                });
            }
        }
        let src = self.data(a).data();
        let mut out = vec![0.0; ids.len() * d];
        for (slot, &i) in ids.iter().enumerate() {
            out[slot * d..(slot + 1) * d].copy_from_slice(&src[i * d..(i + 1) * d]);
        }
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(
            Array::from_vec(ids.len(), d, out),
            rg,
            Op::GatherRows { a, ids: ids.to_vec() },
        ))
    }

    // ── Segment (neighborhood) operations ───────────────────────────

    /// Per-segment reduction of edge-slot rows into node rows. Empty
    /// segments yield the zero row in every mode, mean included, so
    /// isolated nodes cannot poison a forward pass. Accumulation runs in
    /// ascending edge index order.
    pub fn segment_reduce(
        &mut self,
        a: ValueId,
        idx: &SegmentIndex,
        mode: Reduction,
    ) -> Result<ValueId, TensorError> {
        let (e, d) = self.data(a).shape();
        if e != idx.edge_count() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_reduce",
                lhs: self.data(a).shape_string(),
                rhs: format!("segment index over {} edges", idx.edge_count()),
            });
        }
        let n = idx.segment_count();
        let src = self.data(a).data();
        let rg = self.nodes[a.0].requires_grad;
        match mode {
            Reduction::Sum | Reduction::Mean => {
                let mut out = vec![0.0; n * d];
                let mut counts = vec![0usize; n];
                for (slot, &t) in idx.targets().iter().enumerate() {
                    counts[t] += 1;
                    for j in 0..d {
                        out[t * d + j] += src[slot * d + j];
                    }
                }
                if mode == Reduction::Mean {
                    for t in 0..n {
                        if counts[t] > 0 {
                            let inv = 1.0 / counts[t] as f64;
                            for j in 0..d {
                                out[t * d + j] *= inv;
                            }
                        }
                    }
                }
                let op = match mode {
                    Reduction::Sum => Op::SegmentSum { a, targets: idx.targets().to_vec() },
                    _ => Op::SegmentMean { a, targets: idx.targets().to_vec(), counts },
                };
                Ok(self.push(Array::from_vec(n, d, out), rg, op))
            }
            Reduction::Max => {
                let mut out = vec![0.0; n * d];
                let mut argmax = vec![usize::MAX; n * d];
                for (slot, &t) in idx.targets().iter().enumerate() {
                    for j in 0..d {
                        let v = src[slot * d + j];
                        let cell = t * d + j;
                        if argmax[cell] == usize::MAX || v > out[cell] {
                            out[cell] = v;
                            argmax[cell] = slot;
                        }
                    }
                }
                Ok(self.push(Array::from_vec(n, d, out), rg, Op::SegmentMax { a, argmax }))
            }
        }
    }

    /// Exp-normalize scores within each segment, per column, stabilized by
    /// the per-segment maximum. Rows in empty segments do not exist;
    /// every non-empty segment's outputs sum to 1.
    pub fn segment_softmax(
        &mut self,
        a: ValueId,
        idx: &SegmentIndex,
    ) -> Result<ValueId, TensorError> {
        let (e, d) = self.data(a).shape();
        if e != idx.edge_count() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_softmax",
                lhs: self.data(a).shape_string(),
                rhs: format!("segment index over {} edges", idx.edge_count()),
            });
        }
        let n = idx.segment_count();
        let src = self.data(a).data();
        let mut maxes = vec![f64::NEG_INFINITY; n * d];
        for (slot, &t) in idx.targets().iter().enumerate() {
            for j in 0..d {
                let v = src[slot * d + j];
                if v > maxes[t * d + j] {
                    maxes[t * d + j] = v;
                }
            }
        }
        let mut sums = vec![0.0; n * d];
        let mut out = vec![0.0; e * d];
        for (slot, &t) in idx.targets().iter().enumerate() {
            for j in 0..d {
                let v = (src[slot * d + j] - maxes[t * d + j]).exp();
                out[slot * d + j] = v;
                sums[t * d + j] += v;
            }
        }
        for (slot, &t) in idx.targets().iter().enumerate() {
            for j in 0..d {
                out[slot * d + j] /= sums[t * d + j];
            }
        }
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(
            Array::from_vec(e, d, out),
            rg,
            Op::SegmentSoftmax { a, targets: idx.targets().to_vec(), segment_count: n },
        ))
    }

    // ── Nonlinearities and reductions ───────────────────────────────

    pub fn softmax_rows(&mut self, a: ValueId) -> ValueId {
        let (n, d) = self.data(a).shape();
        let src = self.data(a).data();
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let row = &src[i * d..(i + 1) * d];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..d {
                let v = (row[j] - m).exp();
                out[i * d + j] = v;
                s += v;
            }
            for j in 0..d {
                out[i * d + j] /= s;
            }
        }
        let rg = self.nodes[a.0].requires_grad;
        self.push(Array::from_vec(n, d, out), rg, Op::SoftmaxRows { a })
    }

    pub fn activation(&mut self, a: ValueId, kind: Activation) -> ValueId {
        let data = self.data(a).map(|x| match kind {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        });
        let rg = self.nodes[a.0].requires_grad;
        self.push(data, rg, Op::Activation { a, kind })
    }

    /// Inverted dropout: in train mode keeps each entry with probability
    /// `1 - p` and rescales by `1/(1-p)`; eval mode is the identity.
    pub fn dropout(&mut self, a: ValueId, p: f64, mode: Mode, rng: &mut SplitRng) -> ValueId {
        if mode == Mode::Eval || p <= 0.0 {
            return a;
        }
        let (n, d) = self.data(a).shape();
        let keep = 1.0 - p;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..n * d)
            .map(|_| if rng.unit() < keep { scale } else { 0.0 })
            .collect();
        let src = self.data(a).data();
        let out: Vec<f64> = src.iter().zip(mask.iter()).map(|(&x, &m)| x * m).collect();
        let rg = self.nodes[a.0].requires_grad;
        self.push(Array::from_vec(n, d, out), rg, Op::Dropout { a, mask })
    }

    /// Mean of `-log softmax(logits)[gold]` over the batch.
    pub fn cross_entropy(
        &mut self,
        logits: ValueId,
        gold: &[usize],
    ) -> Result<ValueId, TensorError> {
        let (b, a_sz) = self.data(logits).shape();
        if gold.len() != b {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: self.data(logits).shape_string(),
                rhs: format!("{} gold labels", gold.len()),
            });
        }
        for (slot, &g) in gold.iter().enumerate() {
            if g >= a_sz {
                return Err(TensorError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: g,
                    bound: a_sz,
                    slot,
                });
            }
        }
        let src = self.data(logits).data();
        let mut softmax = vec![0.0; b * a_sz];
        let mut loss = 0.0;
        for i in 0..b {
            let row = &src[i * a_sz..(i + 1) * a_sz];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..a_sz {
                let v = (row[j] - m).exp();
                softmax[i * a_sz + j] = v;
                s += v;
            }
            for j in 0..a_sz {
                softmax[i * a_sz + j] /= s;
            }
            // -log softmax[gold] = log(sum exp(x - m)) - (x_gold - m)
            loss += s.ln() - (row[gold[i]] - m);
        }
        loss /= b as f64;
        let rg = self.nodes[logits.0].requires_grad;
        Ok(self.push(
            Array::scalar(loss),
            rg,
            Op::CrossEntropy { logits, softmax, gold: gold.to_vec() },
        ))
    }

    /// Column means: `[n x d] -> [1 x d]`.
    pub fn mean_axis0(&mut self, a: ValueId) -> Result<ValueId, TensorError> {
        let (n, d) = self.data(a).shape();
        if n == 0 {
            return Err(TensorError::EmptyInput { op: "mean_axis0" });
        }
        let src = self.data(a).data();
        let mut out = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                out[j] += src[i * d + j];
            }
        }
        for v in out.iter_mut() {
            *v /= n as f64;
        }
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(Array::from_vec(1, d, out), rg, Op::MeanAxis0 { a }))
    }

    /// Row sums: `[n x d] -> [n x 1]`.
    pub fn sum_axis1(&mut self, a: ValueId) -> ValueId {
        let (n, d) = self.data(a).shape();
        let src = self.data(a).data();
        let out: Vec<f64> = (0..n).map(|i| src[i * d..(i + 1) * d].iter().sum()).collect();
        let rg = self.nodes[a.0].requires_grad;
        self.push(Array::from_vec(n, 1, out), rg, Op::SumAxis1 { a })
    }

    /// Sum of every entry, as a scalar.
    pub fn sum_all(&mut self, a: ValueId) -> ValueId {
        let s: f64 = self.data(a).iter().sum();
        let rg = self.nodes[a.0].requires_grad;
        self.push(Array::scalar(s), rg, Op::SumAll { a })
    }

    /// Layer normalization over each row, with learned gain and bias.
    pub fn layer_norm(
        &mut self,
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        eps: f64,
    ) -> Result<ValueId, TensorError> {
        let (n, d) = self.data(x).shape();
        if self.data(gamma).shape() != (1, d) || self.data(beta).shape() != (1, d) {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: self.data(x).shape_string(),
                rhs: format!(
                    "gamma {} beta {}",
                    self.data(gamma).shape_string(),
                    self.data(beta).shape_string()
                ),
            });
        }
        let src = self.data(x).data();
        let g = self.data(gamma).data().to_vec();
        let b = self.data(beta).data().to_vec();
        let mut out = vec![0.0; n * d];
        let mut xhat = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let row = &src[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                xhat[i * d + j] = xh;
                out[i * d + j] = g[j] * xh + b[j];
            }
        }
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            Array::from_vec(n, d, out),
            rg,
            Op::LayerNorm { x, gamma, beta, xhat, inv_std },
        ))
    }

    /// Batch normalization over axis 0 using batch statistics (train mode).
    /// Returns the output plus the per-column batch mean and variance so the
    /// caller can maintain running statistics for eval.
    pub fn batch_norm_train(
        &mut self,
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        eps: f64,
    ) -> Result<(ValueId, Vec<f64>, Vec<f64>), TensorError> {
        let (n, d) = self.data(x).shape();
        if n == 0 {
            return Err(TensorError::EmptyInput { op: "batch_norm_train" });
        }
        if self.data(gamma).shape() != (1, d) || self.data(beta).shape() != (1, d) {
            return Err(TensorError::ShapeMismatch {
                op: "batch_norm_train",
                lhs: self.data(x).shape_string(),
                rhs: format!(
                    "gamma {} beta {}",
                    self.data(gamma).shape_string(),
                    self.data(beta).shape_string()
                ),
            });
        }
        let src = self.data(x).data();
        let g = self.data(gamma).data().to_vec();
        let b = self.data(beta).data().to_vec();
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                mean[j] += src[i * d + j];
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let mut var = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                let dv = src[i * d + j] - mean[j];
                var[j] += dv * dv;
            }
        }
        for v in var.iter_mut() {
            *v /= n as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let mut out = vec![0.0; n * d];
        let mut xhat = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                let xh = (src[i * d + j] - mean[j]) * inv_std[j];
                xhat[i * d + j] = xh;
                out[i * d + j] = g[j] * xh + b[j];
            }
        }
        let rg = self.any_grad(&[x, gamma, beta]);
        let id = self.push(
            Array::from_vec(n, d, out),
            rg,
            Op::BatchNormTrain { x, gamma, beta, xhat, inv_std },
        );
        Ok((id, mean, var))
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients accumulate into every
    /// ancestor with `requires_grad`; each node is visited exactly once.
    pub fn backward(&mut self, loss: ValueId) -> Result<(), TensorError> {
        if self.nodes[loss.0].data.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.nodes[loss.0].data.shape_string(),
            });
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || self.nodes[i].grad.is_none() {
                continue;
            }
            let (parents, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            let grad = node.grad.take().expect("grad checked above");
            dispatch(node, &grad, parents);
            node.grad = Some(grad);
        }
        Ok(())
    }

    /// Collect gradients of named parameter leaves, accumulated by path.
    pub fn param_grads(&self) -> BTreeMap<String, Array> {
        let mut out: BTreeMap<String, Array> = BTreeMap::new();
        for node in &self.nodes {
            let (Some(path), Some(grad)) = (&node.path, &node.grad) else {
                continue;
            };
            let (r, c) = node.data.shape();
            let arr = Array::from_vec(r, c, grad.clone());
            out.entry(path.clone())
                .and_modify(|acc| {
                    for (x, y) in acc.data_mut().iter_mut().zip(arr.iter()) {
                        *x += y;
                    }
                })
                .or_insert(arr);
        }
        out
    }
}

fn accum(parents: &mut [Node], p: ValueId, contrib: &[f64]) {
    let node = &mut parents[p.0];
    if !node.requires_grad {
        return;
    }
    let grad = node
        .grad
        .get_or_insert_with(|| vec![0.0; node.data.numel()]);
    for (g, c) in grad.iter_mut().zip(contrib.iter()) {
        *g += c;
    }
}

fn dispatch(node: &Node, g: &[f64], parents: &mut [Node]) {
    match &node.op {
        Op::Leaf => {}
        Op::Matmul { a, b } => {
            let (m, k) = parents[a.0].data.shape();
            let n = parents[b.0].data.cols();
            if parents[a.0].requires_grad {
                let mut da = vec![0.0; m * k];
                matmul_into(&mut da, g, parents[b.0].data.data(), m, n, k, false, true);
                accum(parents, *a, &da);
            }
            if parents[b.0].requires_grad {
                let mut db = vec![0.0; k * n];
                matmul_into(&mut db, parents[a.0].data.data(), g, k, m, n, true, false);
                accum(parents, *b, &db);
            }
        }
        Op::MatmulNT { a, b } => {
            // C = A B^T with A [m x k], B [n x k], G [m x n]
            let (m, k) = parents[a.0].data.shape();
            let n = parents[b.0].data.rows();
            if parents[a.0].requires_grad {
                let mut da = vec![0.0; m * k];
                matmul_into(&mut da, g, parents[b.0].data.data(), m, n, k, false, false);
                accum(parents, *a, &da);
            }
            if parents[b.0].requires_grad {
                let mut db = vec![0.0; n * k];
                matmul_into(&mut db, g, parents[a.0].data.data(), n, m, k, true, false);
                accum(parents, *b, &db);
            }
        }
        Op::Add { a, b } => {
            accum(parents, *a, g);
            accum(parents, *b, g);
        }
        Op::Sub { a, b } => {
            accum(parents, *a, g);
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            accum(parents, *b, &neg);
        }
        Op::Mul { a, b } => {
            if parents[a.0].requires_grad {
                let da: Vec<f64> = g
                    .iter()
                    .zip(parents[b.0].data.iter())
                    .map(|(&gv, &bv)| gv * bv)
                    .collect();
                accum(parents, *a, &da);
            }
            if parents[b.0].requires_grad {
                let db: Vec<f64> = g
                    .iter()
                    .zip(parents[a.0].data.iter())
                    .map(|(&gv, &av)| gv * av)
                    .collect();
                accum(parents, *b, &db);
            }
        }
        Op::AddRow { a, r } => {
            accum(parents, *a, g);
            if parents[r.0].requires_grad {
                let d = parents[r.0].data.cols();
                let n = g.len() / d;
                let mut dr = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        dr[j] += g[i * d + j];
                    }
                }
                accum(parents, *r, &dr);
            }
        }
        Op::MulRow { a, r } => {
            let d = parents[r.0].data.cols();
            let n = g.len() / d;
            if parents[a.0].requires_grad {
                let row = parents[r.0].data.data();
                let da: Vec<f64> = g
                    .iter()
                    .enumerate()
                    .map(|(idx, &gv)| gv * row[idx % d])
                    .collect();
                accum(parents, *a, &da);
            }
            if parents[r.0].requires_grad {
                let av = parents[a.0].data.data();
                let mut dr = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        dr[j] += g[i * d + j] * av[i * d + j];
                    }
                }
                accum(parents, *r, &dr);
            }
        }
        Op::ScaleRows { a, s } => {
            let n = parents[s.0].data.rows();
            let d = g.len() / n;
            if parents[a.0].requires_grad {
                let col = parents[s.0].data.data();
                let da: Vec<f64> = g
                    .iter()
                    .enumerate()
                    .map(|(idx, &gv)| gv * col[idx / d])
                    .collect();
                accum(parents, *a, &da);
            }
            if parents[s.0].requires_grad {
                let av = parents[a.0].data.data();
                let mut ds = vec![0.0; n];
                for i in 0..n {
                    for j in 0..d {
                        ds[i] += g[i * d + j] * av[i * d + j];
                    }
                }
                accum(parents, *s, &ds);
            }
        }
        Op::Scale { a, c } => {
            let da: Vec<f64> = g.iter().map(|v| c * v).collect();
            accum(parents, *a, &da);
        }
        Op::ConcatRows { parts } => {
            let mut offset = 0;
            for &p in parts {
                let len = parents[p.0].data.numel();
                let slice = g[offset..offset + len].to_vec();
                accum(parents, p, &slice);
                offset += len;
            }
        }
        Op::ConcatCols { parts } => {
            let n = parents[parts[0].0].data.rows();
            let width = g.len() / n;
            let mut offset = 0;
            for &p in parts {
                let w = parents[p.0].data.cols();
                if parents[p.0].requires_grad {
                    let mut dp = vec![0.0; n * w];
                    for i in 0..n {
                        dp[i * w..(i + 1) * w]
                            .copy_from_slice(&g[i * width + offset..i * width + offset + w]);
                    }
                    accum(parents, p, &dp);
                }
                offset += w;
            }
        }
        Op::SliceCols { a, start } => {
            let (n, d) = parents[a.0].data.shape();
            let w = g.len() / n;
            let mut da = vec![0.0; n * d];
            for i in 0..n {
                da[i * d + start..i * d + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
            }
            accum(parents, *a, &da);
        }
        Op::GatherRows { a, ids } => {
            let d = parents[a.0].data.cols();
            let mut da = vec![0.0; parents[a.0].data.numel()];
            for (slot, &i) in ids.iter().enumerate() {
                for j in 0..d {
                    da[i * d + j] += g[slot * d + j];
                }
            }
            accum(parents, *a, &da);
        }
        Op::SegmentSum { a, targets } => {
            let d = parents[a.0].data.cols();
            let mut da = vec![0.0; parents[a.0].data.numel()];
            for (slot, &t) in targets.iter().enumerate() {
                da[slot * d..(slot + 1) * d].copy_from_slice(&g[t * d..(t + 1) * d]);
            }
            accum(parents, *a, &da);
        }
        Op::SegmentMean { a, targets, counts } => {
            let d = parents[a.0].data.cols();
            let mut da = vec![0.0; parents[a.0].data.numel()];
            for (slot, &t) in targets.iter().enumerate() {
                let inv = 1.0 / counts[t] as f64;
                for j in 0..d {
                    da[slot * d + j] = g[t * d + j] * inv;
                }
            }
            accum(parents, *a, &da);
        }
        Op::SegmentMax { a, argmax } => {
            let d = parents[a.0].data.cols();
            let mut da = vec![0.0; parents[a.0].data.numel()];
            for (cell, &slot) in argmax.iter().enumerate() {
                if slot != usize::MAX {
                    let j = cell % d;
                    da[slot * d + j] += g[cell];
                }
            }
            accum(parents, *a, &da);
        }
        Op::SegmentSoftmax { a, targets, segment_count } => {
            let d = parents[a.0].data.cols();
            let y = node.data.data();
            // weighted per-segment sum of g .* y
            let mut dots = vec![0.0; segment_count * d];
            for (slot, &t) in targets.iter().enumerate() {
                for j in 0..d {
                    dots[t * d + j] += g[slot * d + j] * y[slot * d + j];
                }
            }
            let mut da = vec![0.0; g.len()];
            for (slot, &t) in targets.iter().enumerate() {
                for j in 0..d {
                    da[slot * d + j] = y[slot * d + j] * (g[slot * d + j] - dots[t * d + j]);
                }
            }
            accum(parents, *a, &da);
        }
        Op::SoftmaxRows { a } => {
            let (n, d) = parents[a.0].data.shape();
            let y = node.data.data();
            let mut da = vec![0.0; n * d];
            for i in 0..n {
                let dot: f64 = (0..d).map(|j| g[i * d + j] * y[i * d + j]).sum();
                for j in 0..d {
                    da[i * d + j] = y[i * d + j] * (g[i * d + j] - dot);
                }
            }
            accum(parents, *a, &da);
        }
        Op::Activation { a, kind } => {
            let y = node.data.data();
            let da: Vec<f64> = g
                .iter()
                .zip(y.iter())
                .map(|(&gv, &yv)| {
                    let deriv = match kind {
                        Activation::Relu => {
                            if yv > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Activation::Elu => {
                            if yv > 0.0 {
                                1.0
                            } else {
                                yv + 1.0
                            }
                        }
                        Activation::LeakyRelu => {
                            if yv > 0.0 {
                                1.0
                            } else {
                                LEAKY_SLOPE
                            }
                        }
                        Activation::Sigmoid => yv * (1.0 - yv),
                        Activation::Tanh => 1.0 - yv * yv,
                    };
                    gv * deriv
                })
                .collect();
            accum(parents, *a, &da);
        }
        Op::Dropout { a, mask } => {
            let da: Vec<f64> = g.iter().zip(mask.iter()).map(|(&gv, &m)| gv * m).collect();
            accum(parents, *a, &da);
        }
        Op::CrossEntropy { logits, softmax, gold } => {
            let b = gold.len();
            let a_sz = softmax.len() / b;
            let scale = g[0] / b as f64;
            let mut da = vec![0.0; softmax.len()];
            for i in 0..b {
                for j in 0..a_sz {
                    let onehot = if j == gold[i] { 1.0 } else { 0.0 };
                    da[i * a_sz + j] = scale * (softmax[i * a_sz + j] - onehot);
                }
            }
            accum(parents, *logits, &da);
        }
        Op::MeanAxis0 { a } => {
            let (n, d) = parents[a.0].data.shape();
            let inv = 1.0 / n as f64;
            let mut da = vec![0.0; n * d];
            for i in 0..n {
                for j in 0..d {
                    da[i * d + j] = g[j] * inv;
                }
            }
            accum(parents, *a, &da);
        }
        Op::SumAxis1 { a } => {
            let (n, d) = parents[a.0].data.shape();
            let mut da = vec![0.0; n * d];
            for i in 0..n {
                for j in 0..d {
                    da[i * d + j] = g[i];
                }
            }
            accum(parents, *a, &da);
        }
        Op::SumAll { a } => {
            let da = vec![g[0]; parents[a.0].data.numel()];
            accum(parents, *a, &da);
        }
        Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
            let (n, d) = parents[x.0].data.shape();
            let gm = parents[gamma.0].data.data().to_vec();
            if parents[x.0].requires_grad {
                let mut dx = vec![0.0; n * d];
                for i in 0..n {
                    let mut m1 = 0.0;
                    let mut m2 = 0.0;
                    for j in 0..d {
                        let dxh = g[i * d + j] * gm[j];
                        m1 += dxh;
                        m2 += dxh * xhat[i * d + j];
                    }
                    m1 /= d as f64;
                    m2 /= d as f64;
                    for j in 0..d {
                        let dxh = g[i * d + j] * gm[j];
                        dx[i * d + j] = inv_std[i] * (dxh - m1 - xhat[i * d + j] * m2);
                    }
                }
                accum(parents, *x, &dx);
            }
            if parents[gamma.0].requires_grad {
                let mut dg = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        dg[j] += g[i * d + j] * xhat[i * d + j];
                    }
                }
                accum(parents, *gamma, &dg);
            }
            if parents[beta.0].requires_grad {
                let mut db = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        db[j] += g[i * d + j];
                    }
                }
                accum(parents, *beta, &db);
            }
        }
        Op::BatchNormTrain { x, gamma, beta, xhat, inv_std } => {
            let (n, d) = parents[x.0].data.shape();
            let gm = parents[gamma.0].data.data().to_vec();
            if parents[x.0].requires_grad {
                let mut dx = vec![0.0; n * d];
                for j in 0..d {
                    let mut m1 = 0.0;
                    let mut m2 = 0.0;
                    for i in 0..n {
                        let dxh = g[i * d + j] * gm[j];
                        m1 += dxh;
                        m2 += dxh * xhat[i * d + j];
                    }
                    m1 /= n as f64;
                    m2 /= n as f64;
                    for i in 0..n {
                        let dxh = g[i * d + j] * gm[j];
                        dx[i * d + j] = inv_std[j] * (dxh - m1 - xhat[i * d + j] * m2);
                    }
                }
                accum(parents, *x, &dx);
            }
            if parents[gamma.0].requires_grad {
                let mut dg = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        dg[j] += g[i * d + j] * xhat[i * d + j];
                    }
                }
                accum(parents, *gamma, &dg);
            }
            if parents[beta.0].requires_grad {
                let mut db = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        db[j] += g[i * d + j];
                    }
                }
                accum(parents, *beta, &db);
            }
        }
    }
}
