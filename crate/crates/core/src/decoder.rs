//! Decoders reading only the final-layer embedding `h_v^(k)`: self features,
//! degree, and one neighbor-distribution generator per hop.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::encoder::LayerStack;
use crate::error::{Error, Result};
use crate::nn::{Binder, BoundLinear, BoundMlp, Linear, Mlp};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    /// `m -> m -> m`
    pub self_fnn: Mlp,
    /// `m -> m -> 1`, followed by `exp`.
    pub degree_fnn: Mlp,
    pub mu: Linear,
    /// Log-variance head.
    pub logvar: Linear,
    /// One `m -> m -> m` generator per hop `0..k`.
    pub generators: Vec<Mlp>,
}

impl DecoderParams {
    pub fn new<R: Rng + ?Sized>(dim: usize, k: usize, rng: &mut R) -> Self {
        DecoderParams {
            self_fnn: Mlp::new(&[dim, dim, dim], rng),
            degree_fnn: Mlp::new(&[dim, dim, 1], rng),
            mu: Linear::new(dim, dim, rng),
            logvar: Linear::new(dim, dim, rng),
            generators: (0..k).map(|_| Mlp::new(&[dim, dim, dim], rng)).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.generators.len()
    }

    pub fn dim(&self) -> usize {
        self.mu.in_dim()
    }

    pub fn bind<'t>(&self, b: &mut Binder<'t>) -> BoundDecoder<'t> {
        BoundDecoder {
            self_fnn: self.self_fnn.bind(b),
            degree_fnn: self.degree_fnn.bind(b),
            mu: self.mu.bind(b),
            logvar: self.logvar.bind(b),
            generators: self.generators.iter().map(|g| g.bind(b)).collect(),
        }
    }

    pub fn named_into<'a>(&'a self, out: &mut Vec<(String, &'a Tensor)>) {
        self.self_fnn.named_into("decoder.self", out);
        self.degree_fnn.named_into("decoder.degree", out);
        out.push(("decoder.mu.weight".into(), &self.mu.weight));
        out.push(("decoder.mu.bias".into(), &self.mu.bias));
        out.push(("decoder.logvar.weight".into(), &self.logvar.weight));
        out.push(("decoder.logvar.bias".into(), &self.logvar.bias));
        for (i, g) in self.generators.iter().enumerate() {
            g.named_into(&format!("decoder.gen{i}"), out);
        }
    }

    pub fn params_into<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.self_fnn.params_into(out);
        self.degree_fnn.params_into(out);
        for l in [&mut self.mu, &mut self.logvar] {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for g in &mut self.generators {
            g.params_into(out);
        }
    }
}

pub struct BoundDecoder<'t> {
    pub self_fnn: BoundMlp<'t>,
    pub degree_fnn: BoundMlp<'t>,
    pub mu: BoundLinear<'t>,
    pub logvar: BoundLinear<'t>,
    pub generators: Vec<BoundMlp<'t>>,
}

impl<'t> BoundDecoder<'t> {
    pub fn self_features(&self, h: Var<'t>) -> Result<Var<'t>> {
        self.self_fnn.forward(h)
    }

    /// One positive degree per row.
    pub fn degree(&self, h: Var<'t>) -> Result<Var<'t>> {
        Ok(self.degree_fnn.forward(h)?.exp())
    }

    /// `xi = mu + exp(logvar / 2) * eps` for `q` draws per row of `h`; row
    /// `r * q + j` of the result is draw `j` for input row `r`. The noise is a
    /// constant, so gradients reach only the two heads.
    pub fn latent(&self, h: Var<'t>, q: usize, noise: &Tensor) -> Result<Var<'t>> {
        let rows = h.value().rows();
        let cols = self.mu.weight.value().cols();
        if noise.shape() != [rows * q, cols] {
            return Err(Error::Dimension(format!(
                "noise {:?} for {rows} rows x {q} draws of width {cols}",
                noise.shape()
            )));
        }
        let rep: Vec<usize> = (0..rows).flat_map(|r| std::iter::repeat(r).take(q)).collect();
        let mu = self.mu.forward(h)?.gather_rows(&rep)?;
        let std = self.logvar.forward(h)?.scale(0.5).exp().gather_rows(&rep)?;
        mu.add(std.mul(h.tape().constant(noise.clone()))?)
    }

    pub fn generate(&self, hop: usize, xi: Var<'t>) -> Result<Var<'t>> {
        let g = self.generators.get(hop).ok_or(Error::Index {
            index: hop,
            len: self.generators.len(),
        })?;
        g.forward(xi)
    }
}

/// Standard normal noise for `rows * q` draws of width `dim`, row-major.
pub fn draw_noise<R: Rng + ?Sized>(rows: usize, q: usize, dim: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * q * dim).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows * q, dim, data).expect("noise shape")
}

/// Decoded neighborhood of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedNeighborhood {
    pub self_features: Vec<f64>,
    pub degree: f64,
    /// Per hop, a `q x m` matrix of generated vectors.
    pub generated: Vec<Tensor>,
}

fn row_tensor(h: &[f64]) -> Tensor {
    Tensor::matrix(1, h.len(), h.to_vec()).expect("row vector")
}

fn check_width(params: &DecoderParams, h: &[f64]) -> Result<()> {
    if h.len() != params.dim() {
        return Err(Error::Dimension(format!("embedding of width {}, decoder expects {}", h.len(), params.dim())));
    }
    Ok(())
}

pub fn decode_self(params: &DecoderParams, h: &[f64]) -> Result<Vec<f64>> {
    check_width(params, h)?;
    Ok(params.self_fnn.eval(&row_tensor(h))?.into_data())
}

pub fn decode_degree(params: &DecoderParams, h: &[f64]) -> Result<f64> {
    check_width(params, h)?;
    Ok(params.degree_fnn.eval(&row_tensor(h))?.item().exp())
}

/// `q` generated vectors for hop `hop`, as a `q x m` matrix.
pub fn sample_generated<R: Rng + ?Sized>(
    params: &DecoderParams,
    h: &[f64],
    hop: usize,
    q: usize,
    rng: &mut R,
) -> Result<Tensor> {
    check_width(params, h)?;
    if hop >= params.k() {
        return Err(Error::Index {
            index: hop,
            len: params.k(),
        });
    }
    let noise = draw_noise(1, q, params.dim(), rng);
    let tape = Tape::new();
    let mut b = Binder::new(&tape);
    let dec = params.bind(&mut b);
    let xi = dec.latent(tape.constant(row_tensor(h)), q, &noise)?;
    let out = dec.generate(hop, xi)?;
    let v = out.value().clone();
    Ok(v)
}

/// Full decoding of node `v` from `H^(k)`. One batch of `q` latent draws is
/// shared by every hop's generator.
pub fn decode_all<R: Rng + ?Sized>(
    params: &DecoderParams,
    stack: &LayerStack,
    v: usize,
    q: usize,
    rng: &mut R,
) -> Result<DecodedNeighborhood> {
    let hk = stack.output();
    if v >= hk.rows() {
        return Err(Error::Index { index: v, len: hk.rows() });
    }
    let h = hk.row(v);
    check_width(params, h)?;
    let noise = draw_noise(1, q, params.dim(), rng);
    let tape = Tape::new();
    let mut b = Binder::new(&tape);
    let dec = params.bind(&mut b);
    let hv = tape.constant(row_tensor(h));
    let self_features = dec.self_features(hv)?.value().data().to_vec();
    let degree = dec.degree(hv)?.item();
    let xi = dec.latent(hv, q, &noise)?;
    let generated = (0..params.k())
        .map(|i| Ok(dec.generate(i, xi)?.value().clone()))
        .collect::<Result<_>>()?;
    Ok(DecodedNeighborhood {
        self_features,
        degree,
        generated,
    })
}
