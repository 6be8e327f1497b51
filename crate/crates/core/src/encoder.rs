//! Input projection with pair-norm, followed by `k` message-passing layers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{Binder, BoundLinear, Linear};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Symmetric-normalised propagation with self-loops.
    #[default]
    Gcn,
    /// Unweighted sum over the node and its neighbors.
    Gin,
}

/// Learnable encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub kind: EncoderKind,
    /// `F x m` input projection applied before pair-norm.
    pub projection: Tensor,
    /// One `m x m` layer (plus bias) per hop.
    pub layers: Vec<Linear>,
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(feature_dim: usize, dim: usize, k: usize, kind: EncoderKind, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(Error::Contract("encoder needs at least one layer".into()));
        }
        Ok(EncoderParams {
            kind,
            projection: Tensor::glorot(feature_dim, dim, rng),
            layers: (0..k).map(|_| Linear::new(dim, dim, rng)).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn bind<'t>(&self, b: &mut Binder<'t>) -> BoundEncoder<'t> {
        BoundEncoder {
            kind: self.kind,
            projection: b.bind(&self.projection),
            layers: self.layers.iter().map(|l| l.bind(b)).collect(),
        }
    }

    pub fn named_into<'a>(&'a self, out: &mut Vec<(String, &'a Tensor)>) {
        out.push(("encoder.projection".into(), &self.projection));
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("encoder.layer{i}.weight"), &l.weight));
            out.push((format!("encoder.layer{i}.bias"), &l.bias));
        }
    }

    pub fn params_into<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.projection);
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
    }
}

/// `H^(0) .. H^(k)`, one `|V| x m` matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<Tensor>,
}

impl LayerStack {
    pub fn k(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn output(&self) -> &Tensor {
        self.layers.last().expect("non-empty stack")
    }
}

/// Edge list for one round of message passing, self-loops included, grouped
/// by destination node in ascending order.
#[derive(Debug, Clone)]
pub struct Propagation {
    src: Vec<usize>,
    dst: Vec<usize>,
    weight: Vec<f64>,
    num_nodes: usize,
}

impl Propagation {
    pub fn new(g: &Graph, kind: EncoderKind) -> Self {
        let n = g.num_nodes();
        let cap = n + 2 * g.num_edges();
        let (mut src, mut dst, mut weight) = (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
        for v in 0..n {
            let dv = g.degree(v) as f64 + 1.0;
            src.push(v);
            dst.push(v);
            weight.push(match kind {
                EncoderKind::Gcn => 1.0 / dv,
                EncoderKind::Gin => 1.0,
            });
            for &u in g.neighbors(v) {
                src.push(u);
                dst.push(v);
                weight.push(match kind {
                    EncoderKind::Gcn => 1.0 / (dv * (g.degree(u) as f64 + 1.0)).sqrt(),
                    EncoderKind::Gin => 1.0,
                });
            }
        }
        Propagation {
            src,
            dst,
            weight,
            num_nodes: n,
        }
    }

    /// `out_v = sum_{u in N(v) + v} w_uv * h_u`.
    pub fn aggregate<'t>(&self, h: Var<'t>) -> Result<Var<'t>> {
        let cols = h.value().cols();
        let messages = h.gather_rows(&self.src)?.scale_rows(&self.weight)?;
        let base = h.tape().constant(Tensor::zeros(&[self.num_nodes, cols]));
        base.scatter_add_rows(&self.dst, messages)
    }
}

pub struct BoundEncoder<'t> {
    kind: EncoderKind,
    pub projection: Var<'t>,
    pub layers: Vec<BoundLinear<'t>>,
}

impl<'t> BoundEncoder<'t> {
    /// `H^(0) = pair_norm(X W)`.
    pub fn init(&self, features: Var<'t>) -> Result<Var<'t>> {
        pair_norm(features.matmul(self.projection)?)
    }

    /// Message passing from a given `H^(0)`; returns `H^(0) .. H^(k)`.
    pub fn propagate(&self, prop: &Propagation, h0: Var<'t>) -> Result<Vec<Var<'t>>> {
        let mut stack = Vec::with_capacity(self.layers.len() + 1);
        stack.push(h0);
        let mut h = h0;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(prop.aggregate(h)?)?;
            if i + 1 < self.layers.len() {
                h = h.relu();
            }
            stack.push(h);
        }
        Ok(stack)
    }

    pub fn forward(&self, g: &Graph, prop: &Propagation) -> Result<Vec<Var<'t>>> {
        let x = self.projection.tape().constant(g.features().clone());
        let h0 = self.init(x)?;
        self.propagate(prop, h0)
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }
}

/// Centre the rows, then rescale so the mean squared row norm is one.
pub fn pair_norm(x: Var<'_>) -> Result<Var<'_>> {
    let (n, input_norm) = {
        let v = x.value();
        (v.rows(), v.data().iter().map(|a| a * a).sum::<f64>().sqrt())
    };
    if n < 2 {
        return Err(Error::Contract(format!("pair-norm needs at least two rows, got {n}")));
    }
    let centred = x.sub(x.mean_rows())?;
    let sq = centred.sq_norm();
    let frob = sq.item().sqrt();
    if frob <= 1e-12 * input_norm || frob == 0.0 {
        return Err(Error::Degenerate(
            "pair-norm input rows are all equal after centring".into(),
        ));
    }
    Ok(centred.mul(sq.scale(1.0 / n as f64).powf(-0.5))?)
}

/// Plain-value pair-norm.
pub fn pair_norm_values(x: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let out = pair_norm(tape.constant(x.clone()))?;
    let v = out.value().clone();
    Ok(v)
}

/// `H^(0) = pair_norm(X W)` on plain values.
pub fn init_h0(g: &Graph, params: &EncoderParams) -> Result<Tensor> {
    if g.feature_dim() != params.feature_dim() {
        return Err(Error::Dimension(format!(
            "graph has {} feature columns, projection expects {}",
            g.feature_dim(),
            params.feature_dim()
        )));
    }
    let tape = Tape::new();
    let mut b = Binder::new(&tape);
    let enc = params.bind(&mut b);
    let h0 = enc.init(tape.constant(g.features().clone()))?;
    let v = h0.value().clone();
    Ok(v)
}

/// Deterministic full-graph forward pass.
pub fn encode(g: &Graph, params: &EncoderParams) -> Result<LayerStack> {
    let h0 = init_h0(g, params)?;
    propagate(g, params, &h0)
}

/// Message passing from an explicit `H^(0)`.
pub fn propagate(g: &Graph, params: &EncoderParams, h0: &Tensor) -> Result<LayerStack> {
    if h0.rows() != g.num_nodes() || h0.cols() != params.dim() {
        return Err(Error::Dimension(format!(
            "H0 {:?} for {} nodes of width {}",
            h0.shape(),
            g.num_nodes(),
            params.dim()
        )));
    }
    let tape = Tape::new();
    let mut b = Binder::new(&tape);
    let enc = params.bind(&mut b);
    let prop = Propagation::new(g, params.kind);
    let stack = enc.propagate(&prop, tape.constant(h0.clone()))?;
    Ok(LayerStack {
        layers: stack.iter().map(|v| v.value().clone()).collect(),
    })
}
