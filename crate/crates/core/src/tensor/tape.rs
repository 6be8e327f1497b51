use std::cell::{Ref, RefCell};
use std::fmt;

use super::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

/// How the right operand of a binary op is broadcast against the left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    /// `1 x c` row repeated over every row.
    Row,
    /// `r x 1` column repeated over every column.
    Col,
    Scalar,
}

impl Bcast {
    fn resolve(a: &Tensor, b: &Tensor, op: &str) -> Result<Bcast> {
        if a.shape() == b.shape() || (a.numel() == b.numel() && a.rows() == b.rows()) {
            Ok(Bcast::Same)
        } else if b.numel() == 1 {
            Ok(Bcast::Scalar)
        } else if b.rows() == 1 && b.cols() == a.cols() {
            Ok(Bcast::Row)
        } else if b.cols() == 1 && b.rows() == a.rows() {
            Ok(Bcast::Col)
        } else {
            Err(Error::Dimension(format!(
                "{op}: cannot broadcast {:?} against {:?}",
                b.shape(),
                a.shape()
            )))
        }
    }

    #[inline]
    fn index(self, i: usize, j: usize, cols: usize) -> usize {
        match self {
            Bcast::Same => i * cols + j,
            Bcast::Row => j,
            Bcast::Col => i,
            Bcast::Scalar => 0,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Const,
    MatMul(usize, usize),
    Add(usize, usize, Bcast),
    Sub(usize, usize, Bcast),
    Mul(usize, usize, Bcast),
    Scale(usize, f64),
    Relu(usize),
    Exp(usize),
    Powf(usize, f64),
    Sum(usize),
    SqNorm(usize),
    RowSums(usize),
    MeanRows(usize),
    GatherRows(usize, Vec<usize>),
    ScatterAddRows {
        base: usize,
        ids: Vec<usize>,
        src: usize,
    },
    ScaleRows(usize, Vec<f64>),
    SoftmaxXent(usize, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of every value computed during one forward pass.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and `backward` only has to walk it in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.value().shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Differentiable leaf holding a copy of `t`'s values.
    pub fn leaf(&self, t: &Tensor) -> Var<'_> {
        let mut value = t.clone();
        value.clear_grad();
        self.push(value, Op::Leaf, true)
    }

    /// Value that gradients never flow into.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        let mut t = t;
        t.clear_grad();
        self.push(t, Op::Const, false)
    }

    /// Reverse sweep from a one-element `root`.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[root.id].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                nodes[root.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[root.id] = Some(vec![1.0]);

        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let g = match (&node.op, &grads[id]) {
                (Op::Leaf, _) | (_, None) => continue,
                (_, Some(_)) => grads[id].take().expect("checked"),
            };
            backprop(&nodes, id, &g, &mut grads);
        }
        let leaf_grads = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, n)| match n.op {
                Op::Leaf => g,
                _ => None,
            })
            .collect();
        Ok(Gradients { grads: leaf_grads })
    }
}

fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    let n = nodes[id].value.numel();
    Some(grads[id].get_or_insert_with(|| vec![0.0; n]))
}

/// Sum `g` (shaped like the left operand) down to the right operand's shape.
fn reduce_into(dst: &mut [f64], g: &[f64], bc: Bcast, rows: usize, cols: usize, sign: f64) {
    for i in 0..rows {
        for j in 0..cols {
            dst[bc.index(i, j, cols)] += sign * g[i * cols + j];
        }
    }
}

fn backprop(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf | Op::Const => {}
        &Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            let (m, k, n) = (av.rows(), av.cols(), bv.cols());
            if let Some(da) = slot(grads, nodes, a) {
                gemm_nt_acc(g, bv.data(), da, m, n, k);
            }
            if let Some(db) = slot(grads, nodes, b) {
                gemm_tn_acc(av.data(), g, db, m, k, n);
            }
        }
        &Op::Add(a, b, bc) | &Op::Sub(a, b, bc) => {
            let sign = if matches!(nodes[id].op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if let Some(da) = slot(grads, nodes, a) {
                da.iter_mut().zip(g).for_each(|(d, x)| *d += x);
            }
            if let Some(db) = slot(grads, nodes, b) {
                reduce_into(db, g, bc, out.rows(), out.cols(), sign);
            }
        }
        &Op::Mul(a, b, bc) => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            let (rows, cols) = (av.rows(), av.cols());
            if let Some(da) = slot(grads, nodes, a) {
                for i in 0..rows {
                    for j in 0..cols {
                        da[i * cols + j] += g[i * cols + j] * bv.data()[bc.index(i, j, cols)];
                    }
                }
            }
            if let Some(db) = slot(grads, nodes, b) {
                for i in 0..rows {
                    for j in 0..cols {
                        let k = i * cols + j;
                        db[bc.index(i, j, cols)] += g[k] * av.data()[k];
                    }
                }
            }
        }
        &Op::Scale(a, c) => {
            if let Some(da) = slot(grads, nodes, a) {
                da.iter_mut().zip(g).for_each(|(d, x)| *d += c * x);
            }
        }
        &Op::Relu(a) => {
            let av = nodes[a].value.data();
            if let Some(da) = slot(grads, nodes, a) {
                for ((d, x), &v) in da.iter_mut().zip(g).zip(av) {
                    if v > 0.0 {
                        *d += x;
                    }
                }
            }
        }
        &Op::Exp(a) => {
            if let Some(da) = slot(grads, nodes, a) {
                for ((d, x), y) in da.iter_mut().zip(g).zip(out.data()) {
                    *d += x * y;
                }
            }
        }
        &Op::Powf(a, p) => {
            let av = nodes[a].value.data();
            if let Some(da) = slot(grads, nodes, a) {
                for ((d, x), &v) in da.iter_mut().zip(g).zip(av) {
                    *d += x * p * v.powf(p - 1.0);
                }
            }
        }
        &Op::Sum(a) => {
            if let Some(da) = slot(grads, nodes, a) {
                da.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        &Op::SqNorm(a) => {
            let av = nodes[a].value.data();
            if let Some(da) = slot(grads, nodes, a) {
                for (d, &v) in da.iter_mut().zip(av) {
                    *d += 2.0 * g[0] * v;
                }
            }
        }
        &Op::RowSums(a) => {
            let cols = nodes[a].value.cols();
            if let Some(da) = slot(grads, nodes, a) {
                for (i, row) in da.chunks_mut(cols).enumerate() {
                    row.iter_mut().for_each(|d| *d += g[i]);
                }
            }
        }
        &Op::MeanRows(a) => {
            let (rows, cols) = (nodes[a].value.rows(), nodes[a].value.cols());
            let inv = 1.0 / rows as f64;
            if let Some(da) = slot(grads, nodes, a) {
                for row in da.chunks_mut(cols) {
                    row.iter_mut().zip(g).for_each(|(d, x)| *d += x * inv);
                }
            }
        }
        Op::GatherRows(a, ids) => {
            let cols = out.cols();
            if let Some(da) = slot(grads, nodes, *a) {
                for (t, &r) in ids.iter().enumerate() {
                    let src = &g[t * cols..(t + 1) * cols];
                    da[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(d, x)| *d += x);
                }
            }
        }
        Op::ScatterAddRows { base, ids, src } => {
            let cols = out.cols();
            if let Some(db) = slot(grads, nodes, *base) {
                db.iter_mut().zip(g).for_each(|(d, x)| *d += x);
            }
            if let Some(ds) = slot(grads, nodes, *src) {
                for (t, &r) in ids.iter().enumerate() {
                    ds[t * cols..(t + 1) * cols]
                        .iter_mut()
                        .zip(&g[r * cols..(r + 1) * cols])
                        .for_each(|(d, x)| *d += x);
                }
            }
        }
        Op::ScaleRows(a, w) => {
            let cols = out.cols();
            if let Some(da) = slot(grads, nodes, *a) {
                for (i, row) in da.chunks_mut(cols).enumerate() {
                    row.iter_mut()
                        .zip(&g[i * cols..(i + 1) * cols])
                        .for_each(|(d, x)| *d += w[i] * x);
                }
            }
        }
        Op::SoftmaxXent(a, targets) => {
            let z = &nodes[*a].value;
            let (rows, cols) = (z.rows(), z.cols());
            let scale = g[0] / rows as f64;
            if let Some(da) = slot(grads, nodes, *a) {
                for i in 0..rows {
                    let probs = softmax(z.row(i));
                    for j in 0..cols {
                        let onehot = if j == targets[i] { 1.0 } else { 0.0 };
                        da[i * cols + j] += scale * (probs[j] - onehot);
                    }
                }
            }
        }
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradients of the leaves reachable from a `backward` root.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when `v` is not a leaf or the root does not depend on it.
    pub fn wrt(&self, v: Var<'_>) -> Option<&[f64]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Add the gradient of each leaf in `vars` into the matching tensor's grad
    /// buffer. Unreachable leaves leave their tensor untouched.
    pub fn accumulate_into<'a, I>(&self, vars: &[Var<'_>], tensors: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut Tensor>,
    {
        let mut count = 0;
        for (v, t) in vars.iter().zip(tensors) {
            if let Some(g) = self.wrt(*v) {
                t.accumulate_grad(g)?;
            }
            count += 1;
        }
        if count != vars.len() {
            return Err(Error::Contract(format!(
                "{} leaves bound but {count} tensors supplied",
                vars.len()
            )));
        }
        Ok(())
    }
}

impl<'t> Var<'t> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(self) -> f64 {
        self.value().item()
    }

    /// A constant copy of this value, cut off from the gradient.
    pub fn detach(self) -> Var<'t> {
        let v = self.value().clone();
        self.tape.constant(v)
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rg)
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value();
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())
            .expect("same shape")
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let (a, b) = (self.value(), other.value());
            if a.cols() != b.rows() || b.shape().len() > 2 {
                return Err(Error::Dimension(format!(
                    "matmul: {:?} x {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            let mut out = vec![0.0; m * n];
            gemm_acc(a.data(), b.data(), &mut out, m, k, n);
            Tensor::new(vec![m, n], out)?
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    fn binary(self, other: Var<'t>, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, Bcast)> {
        let (a, b) = (self.value(), other.value());
        let bc = Bcast::resolve(&a, &b, name)?;
        let (rows, cols) = (a.rows(), a.cols());
        let mut out = Vec::with_capacity(a.numel());
        for i in 0..rows {
            for j in 0..cols {
                out.push(f(a.data()[i * cols + j], b.data()[bc.index(i, j, cols)]));
            }
        }
        Ok((Tensor::new(a.shape().to_vec(), out)?, bc))
    }

    /// Elementwise `self + other`; `other` may be a row, a column or a scalar.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (v, bc) = self.binary(other, "add", |x, y| x + y)?;
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(v, Op::Add(self.id, other.id, bc), rg))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let (v, bc) = self.binary(other, "sub", |x, y| x - y)?;
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(v, Op::Sub(self.id, other.id, bc), rg))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (v, bc) = self.binary(other, "mul", |x, y| x * y)?;
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(v, Op::Mul(self.id, other.id, bc), rg))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let v = self.map(|x| c * x);
        self.unary(v, Op::Scale(self.id, c))
    }

    pub fn relu(self) -> Var<'t> {
        let v = self.map(|x| x.max(0.0));
        self.unary(v, Op::Relu(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        let v = self.map(f64::exp);
        self.unary(v, Op::Exp(self.id))
    }

    pub fn powf(self, p: f64) -> Var<'t> {
        let v = self.map(|x| x.powf(p));
        self.unary(v, Op::Powf(self.id, p))
    }

    pub fn sum(self) -> Var<'t> {
        let s: f64 = self.value().data().iter().sum();
        self.unary(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn sq_norm(self) -> Var<'t> {
        let s: f64 = self.value().data().iter().map(|x| x * x).sum();
        self.unary(Tensor::scalar(s), Op::SqNorm(self.id))
    }

    /// `r x c -> r x 1`.
    pub fn row_sums(self) -> Var<'t> {
        let v = {
            let a = self.value();
            let sums = a.data().chunks(a.cols()).map(|r| r.iter().sum()).collect();
            Tensor::new(vec![a.rows(), 1], sums).expect("shape")
        };
        self.unary(v, Op::RowSums(self.id))
    }

    /// Column means, `r x c -> 1 x c`.
    pub fn mean_rows(self) -> Var<'t> {
        let v = {
            let a = self.value();
            let (rows, cols) = (a.rows(), a.cols());
            let mut m = vec![0.0; cols];
            for row in a.data().chunks(cols) {
                m.iter_mut().zip(row).for_each(|(s, x)| *s += x);
            }
            m.iter_mut().for_each(|s| *s /= rows as f64);
            Tensor::new(vec![1, cols], m).expect("shape")
        };
        self.unary(v, Op::MeanRows(self.id))
    }

    pub fn gather_rows(self, ids: &[usize]) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            if let Some(&bad) = ids.iter().find(|&&i| i >= a.rows()) {
                return Err(Error::Index {
                    index: bad,
                    len: a.rows(),
                });
            }
            a.select_rows(ids)
        };
        Ok(self.unary(v, Op::GatherRows(self.id, ids.to_vec())))
    }

    /// `self` with row `t` of `src` added into row `ids[t]`, for every `t`.
    pub fn scatter_add_rows(self, ids: &[usize], src: Var<'t>) -> Result<Var<'t>> {
        let v = {
            let (base, s) = (self.value(), src.value());
            if s.rows() != ids.len() || s.cols() != base.cols() {
                return Err(Error::Dimension(format!(
                    "scatter_add_rows: {} ids, src {:?}, base {:?}",
                    ids.len(),
                    s.shape(),
                    base.shape()
                )));
            }
            let cols = base.cols();
            let mut out = base.clone();
            for (t, &r) in ids.iter().enumerate() {
                if r >= base.rows() {
                    return Err(Error::Index {
                        index: r,
                        len: base.rows(),
                    });
                }
                out.data_mut()[r * cols..(r + 1) * cols]
                    .iter_mut()
                    .zip(s.row(t))
                    .for_each(|(o, x)| *o += x);
            }
            out
        };
        let rg = self.tape.requires(&[self.id, src.id]);
        Ok(self.tape.push(
            v,
            Op::ScatterAddRows {
                base: self.id,
                ids: ids.to_vec(),
                src: src.id,
            },
            rg,
        ))
    }

    /// Multiply row `i` by the constant `w[i]`.
    pub fn scale_rows(self, w: &[f64]) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            if w.len() != a.rows() {
                return Err(Error::Dimension(format!(
                    "scale_rows: {} weights for {:?}",
                    w.len(),
                    a.shape()
                )));
            }
            let cols = a.cols();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(k, x)| x * w[k / cols])
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.unary(v, Op::ScaleRows(self.id, w.to_vec())))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax.
    pub fn softmax_cross_entropy(self, targets: &[usize]) -> Result<Var<'t>> {
        let v = {
            let z = self.value();
            if targets.len() != z.rows() {
                return Err(Error::Dimension(format!(
                    "softmax_cross_entropy: {} targets for {:?}",
                    targets.len(),
                    z.shape()
                )));
            }
            let mut total = 0.0;
            for (i, &t) in targets.iter().enumerate() {
                if t >= z.cols() {
                    return Err(Error::Index {
                        index: t,
                        len: z.cols(),
                    });
                }
                let row = z.row(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                total += lse - row[t];
            }
            Tensor::scalar(total / z.rows().max(1) as f64)
        };
        Ok(self.unary(v, Op::SoftmaxXent(self.id, targets.to_vec())))
    }
}
