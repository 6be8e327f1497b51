//! Small dense building blocks shared by the encoder, decoders and the probe
//! classifier.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

/// Records the leaves created for a parameter set, in creation order, so the
/// gradients can be written back after `backward`.
pub struct Binder<'t> {
    tape: &'t Tape,
    vars: Vec<Var<'t>>,
}

impl<'t> Binder<'t> {
    pub fn new(tape: &'t Tape) -> Self {
        Binder {
            tape,
            vars: Vec::new(),
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn bind(&mut self, t: &Tensor) -> Var<'t> {
        let v = self.tape.leaf(t);
        self.vars.push(v);
        v
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    pub fn into_vars(self) -> Vec<Var<'t>> {
        self.vars
    }
}

/// A collection of parameter tensors with a fixed traversal order.
///
/// `bind` must create leaves in exactly the order `params_mut` yields tensors.
pub trait Parameters {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_scalars(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in x out`
    pub weight: Tensor,
    /// `1 x out`
    pub bias: Tensor,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Linear {
            weight: Tensor::glorot(fan_in, fan_out, rng),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn bind<'t>(&self, b: &mut Binder<'t>) -> BoundLinear<'t> {
        BoundLinear {
            weight: b.bind(&self.weight),
            bias: b.bind(&self.bias),
        }
    }

    fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }
}

#[derive(Clone, Copy)]
pub struct BoundLinear<'t> {
    pub weight: Var<'t>,
    pub bias: Var<'t>,
}

impl<'t> BoundLinear<'t> {
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(self.weight)?.add(self.bias)
    }
}

/// Linear layers with relu between them and none after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [in, hidden.., out]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output widths");
        Mlp {
            layers: dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::out_dim)
    }

    pub fn bind<'t>(&self, b: &mut Binder<'t>) -> BoundMlp<'t> {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(b)).collect(),
        }
    }

    pub fn named_into<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.named(&format!("{prefix}.{i}"), out);
        }
    }

    pub fn params_into<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
    }

    /// Forward pass on plain values, without a tape.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let mut b = Binder::new(&tape);
        let bound = self.bind(&mut b);
        let out = bound.forward(tape.constant(x.clone()))?;
        let v = out.value().clone();
        Ok(v)
    }
}

impl Parameters for Mlp {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.named_into("mlp", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.params_into(&mut out);
        out
    }
}

pub struct BoundMlp<'t> {
    pub layers: Vec<BoundLinear<'t>>,
}

impl<'t> BoundMlp<'t> {
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(h)?;
            if i + 1 < self.layers.len() {
                h = h.relu();
            }
        }
        Ok(h)
    }
}
