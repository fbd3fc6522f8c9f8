//! Reverse-mode differentiation over whole matrices.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! value. [`Tape::backward`] walks the nodes in reverse creation order, which
//! is a valid reverse topological order because inputs always precede the
//! nodes that consume them.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fused operation with a hand-written adjoint.
///
/// `backward` receives the input values, the forward output and the gradient
/// flowing into the output, and returns one gradient per input (`None` where
/// the input is not differentiable).
pub trait CustomOp: Send {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Matrix], output: &Matrix, grad: &Matrix) -> Vec<Option<Matrix>>;
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    Transpose(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Scale(NodeId, f64),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    RowSoftmax(NodeId),
    DiagOf(NodeId),
    Sum(NodeId),
    ColSums(NodeId),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    MulRowBroadcast(NodeId, NodeId),
    AddColBroadcast(NodeId, NodeId),
    GatherCols(NodeId, Vec<usize>),
    Custom(Vec<NodeId>, Box<dyn CustomOp>),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints indexed by node.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `node`. Nodes the loss does not
    /// depend on get `None`.
    pub fn get(&self, node: NodeId) -> Option<&Matrix> {
        self.grads.get(node.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, node: NodeId) -> Option<Matrix> {
        self.grads.get_mut(node.0).and_then(Option::take)
    }
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

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMulNt(a, b), rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(v, Op::Transpose(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).tanh();
        let rg = self.rg(a);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sigmoid();
        let rg = self.rg(a);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, c), rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).row_softmax();
        let rg = self.rg(a);
        self.push(v, Op::RowSoftmax(a), rg)
    }

    /// Diagonal of a square matrix as an `L x 1` column.
    pub fn diag_of(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).diag_of()?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::DiagOf(a), rg))
    }

    /// Sum of all entries, `1 x 1`.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(v, Op::Sum(a), rg)
    }

    /// Per-column sums, `1 x cols`.
    pub fn col_sums(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).col_sums();
        let rg = self.rg(a);
        self.push(v, Op::ColSums(a), rg)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let v = self.value(a).slice_cols(start, end)?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::SliceCols(a, start), rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let v = Matrix::concat_cols(&parts.iter().map(|&p| self.value(p)).collect::<Vec<_>>())?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let v = Matrix::concat_rows(&parts.iter().map(|&p| self.value(p)).collect::<Vec<_>>())?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(v, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Scales column `j` of `x` by `v[0][j]`; `v` is `1 x cols`.
    pub fn mul_row_broadcast(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (xm, vm) = (self.value(x), self.value(v));
        if vm.rows() != 1 || vm.cols() != xm.cols() {
            return Err(Error::shape("mul_row_broadcast", xm.shape(), vm.shape()));
        }
        let mut out = xm.clone();
        let cols = xm.cols();
        for row in out.data_mut().chunks_mut(cols) {
            for (o, s) in row.iter_mut().zip(vm.data()) {
                *o *= s;
            }
        }
        let rg = self.rg(x) || self.rg(v);
        Ok(self.push(out, Op::MulRowBroadcast(x, v), rg))
    }

    /// Adds the column vector `b` (`rows x 1`) to every column of `x`.
    pub fn add_col_broadcast(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (xm, bm) = (self.value(x), self.value(b));
        if bm.cols() != 1 || bm.rows() != xm.rows() {
            return Err(Error::shape("add_col_broadcast", xm.shape(), bm.shape()));
        }
        let mut out = xm.clone();
        let cols = xm.cols();
        for (row, bias) in out.data_mut().chunks_mut(cols).zip(bm.data()) {
            for o in row.iter_mut() {
                *o += bias;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddColBroadcast(x, b), rg))
    }

    /// Selects columns of `table` by index; used for embedding lookup.
    pub fn gather_cols(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        if ids.is_empty() {
            return Err(Error::Contract("gather_cols with no indices".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= t.cols()) {
            return Err(Error::Input(format!(
                "column index {bad} out of range for {} columns",
                t.cols()
            )));
        }
        let mut out = Vec::with_capacity(t.rows() * ids.len());
        for r in 0..t.rows() {
            let row = t.row(r);
            out.extend(ids.iter().map(|&i| row[i]));
        }
        let v = Matrix::from_vec_unchecked(t.rows(), ids.len(), out);
        let rg = self.rg(table);
        Ok(self.push(v, Op::GatherCols(table, ids.to_vec()), rg))
    }

    /// Records a fused op whose forward value the caller already computed.
    pub fn custom(&mut self, inputs: &[NodeId], value: Matrix, op: Box<dyn CustomOp>) -> NodeId {
        let rg = inputs.iter().any(|&p| self.rg(p));
        self.push(value, Op::Custom(inputs.to_vec(), op), rg)
    }

    /// Propagates adjoints from the scalar `loss` back to every node it
    /// depends on. Adjoints accumulate over fan-out.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss node, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let y = &node.value;
            let send = |grads: &mut Vec<Option<Matrix>>, to: NodeId, d: Matrix| {
                if !self.nodes[to.0].requires_grad {
                    return;
                }
                match &mut grads[to.0] {
                    Some(acc) => acc.add_assign(&d),
                    slot @ None => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        send(&mut grads, *a, g.matmul_nt(bv)?);
                    }
                    if self.rg(*b) {
                        send(&mut grads, *b, av.matmul_tn(&g)?);
                    }
                }
                Op::MatMulNt(a, b) => {
                    // y = a b^T: da = g b, db = g^T a
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        send(&mut grads, *a, g.matmul(bv)?);
                    }
                    if self.rg(*b) {
                        send(&mut grads, *b, g.matmul_tn(av)?);
                    }
                }
                Op::Transpose(a) => send(&mut grads, *a, g.transpose()),
                Op::Tanh(a) => {
                    let d = g.zip_with(y, "tanh'", |gi, yi| gi * (1.0 - yi * yi))?;
                    send(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = g.zip_with(y, "sigmoid'", |gi, yi| gi * yi * (1.0 - yi))?;
                    send(&mut grads, *a, d);
                }
                Op::Scale(a, c) => send(&mut grads, *a, g.scale(*c)),
                Op::Add(a, b) => {
                    send(&mut grads, *a, g.clone());
                    send(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        send(&mut grads, *a, g.mul(bv)?);
                    }
                    if self.rg(*b) {
                        send(&mut grads, *b, g.mul(av)?);
                    }
                }
                Op::RowSoftmax(a) => {
                    let cols = y.cols();
                    let mut d = vec![0.0; y.len()];
                    for ((drow, yrow), grow) in d
                        .chunks_mut(cols)
                        .zip(y.data().chunks(cols))
                        .zip(g.data().chunks(cols))
                    {
                        let inner: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        for ((o, yi), gi) in drow.iter_mut().zip(yrow).zip(grow) {
                            *o = yi * (gi - inner);
                        }
                    }
                    send(&mut grads, *a, Matrix::from_vec_unchecked(y.rows(), cols, d));
                }
                Op::DiagOf(a) => {
                    let n = y.rows();
                    let mut d = Matrix::zeros(n, n);
                    for i in 0..n {
                        d.set(i, i, g.get(i, 0));
                    }
                    send(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    send(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::ColSums(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut d = Vec::with_capacity(r * c);
                    for _ in 0..r {
                        d.extend_from_slice(g.data());
                    }
                    send(&mut grads, *a, Matrix::from_vec_unchecked(r, c, d));
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.value(*a).shape();
                    let w = y.cols();
                    let mut d = Matrix::zeros(r, c);
                    for row in 0..r {
                        d.data_mut()[row * c + start..row * c + start + w].copy_from_slice(g.row(row));
                    }
                    send(&mut grads, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.rg(p) {
                            send(&mut grads, p, g.slice_cols(offset, offset + w)?);
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let cols = y.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.value(p).rows();
                        if self.rg(p) {
                            let d = g.data()[offset * cols..(offset + h) * cols].to_vec();
                            send(&mut grads, p, Matrix::from_vec_unchecked(h, cols, d));
                        }
                        offset += h;
                    }
                }
                Op::MulRowBroadcast(x, v) => {
                    let (xv, vv) = (self.value(*x), self.value(*v));
                    let cols = xv.cols();
                    if self.rg(*x) {
                        let mut d = g.clone();
                        for row in d.data_mut().chunks_mut(cols) {
                            for (o, s) in row.iter_mut().zip(vv.data()) {
                                *o *= s;
                            }
                        }
                        send(&mut grads, *x, d);
                    }
                    if self.rg(*v) {
                        let d = g.mul(xv)?.col_sums();
                        send(&mut grads, *v, d);
                    }
                }
                Op::AddColBroadcast(x, b) => {
                    if self.rg(*b) {
                        send(&mut grads, *b, g.row_sums());
                    }
                    send(&mut grads, *x, g);
                }
                Op::GatherCols(table, ids) => {
                    let (r, c) = self.value(*table).shape();
                    let mut d = Matrix::zeros(r, c);
                    let n = ids.len();
                    for row in 0..r {
                        let grow = g.row(row);
                        let drow = &mut d.data_mut()[row * c..(row + 1) * c];
                        for (j, &id) in ids.iter().enumerate().take(n) {
                            drow[id] += grow[j];
                        }
                    }
                    send(&mut grads, *table, d);
                }
                Op::Custom(inputs, op) => {
                    let values: Vec<&Matrix> = inputs.iter().map(|&i| self.value(i)).collect();
                    let ds = op.backward(&values, y, &g);
                    if ds.len() != inputs.len() {
                        return Err(Error::Contract(format!(
                            "{} returned {} gradients for {} inputs",
                            op.name(),
                            ds.len(),
                            inputs.len()
                        )));
                    }
                    for (&input, d) in inputs.iter().zip(ds) {
                        if let Some(d) = d {
                            send(&mut grads, input, d);
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}
