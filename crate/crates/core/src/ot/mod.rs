//! Reconstruction losses between a set of true neighbor vectors and a set of
//! generated ones.
//!
//! Every surrogate reduces to a list of weighted index pairs chosen on plain
//! values; the differentiable loss is `sum_p w_p * ||gen[g_p] - true[t_p]||^2`
//! with the pairs held fixed in the backward pass.

mod hungarian;
mod sinkhorn;

pub use hungarian::{hungarian, Assignment};
pub use sinkhorn::{sinkhorn_cost, sinkhorn_plan};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Surrogate {
    /// Exact minimum-cost matching.
    #[default]
    Hungarian,
    /// Nearest neighbor in both directions.
    Chamfer,
    /// Entropic plan with uniform marginals.
    Sinkhorn { epsilon: f64, iters: usize },
}

impl std::fmt::Display for Surrogate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Surrogate::Hungarian => f.write_str("hungarian"),
            Surrogate::Chamfer => f.write_str("chamfer"),
            Surrogate::Sinkhorn { epsilon, iters } => write!(f, "sinkhorn(epsilon={epsilon}, iters={iters})"),
        }
    }
}

/// `weight * ||gen[gen_idx] - true[true_idx]||^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub true_idx: usize,
    pub gen_idx: usize,
    pub weight: f64,
}

/// Squared Euclidean distances `c[j, l] = ||a_j - b_l||^2` between rows.
pub fn cost_matrix(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "cost between {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (r, c) = (a.rows(), b.rows());
    let mut out = Vec::with_capacity(r * c);
    for j in 0..r {
        let x = a.row(j);
        for l in 0..c {
            out.push(x.iter().zip(b.row(l)).map(|(p, q)| (p - q) * (p - q)).sum());
        }
    }
    Tensor::matrix(r, c, out)
}

fn argmin(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, x) in xs.enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Index pairs (rows of `cost` are true vectors, columns generated ones).
pub fn transport_pairs(cost: &Tensor, surrogate: Surrogate) -> Result<Vec<Pair>> {
    let shape = cost.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Dimension(format!("expected equal set sizes, got cost {shape:?}")));
    }
    let q = shape[0];
    let pairs = match surrogate {
        Surrogate::Hungarian => hungarian(cost)?
            .perm
            .into_iter()
            .enumerate()
            .map(|(j, l)| Pair {
                true_idx: j,
                gen_idx: l,
                weight: 1.0,
            })
            .collect(),
        Surrogate::Chamfer => {
            let mut out = Vec::with_capacity(2 * q);
            for j in 0..q {
                out.push(Pair {
                    true_idx: j,
                    gen_idx: argmin(cost.row(j).iter().copied()),
                    weight: 1.0,
                });
            }
            for l in 0..q {
                out.push(Pair {
                    true_idx: argmin((0..q).map(|j| cost.get(j, l))),
                    gen_idx: l,
                    weight: 1.0,
                });
            }
            out
        }
        Surrogate::Sinkhorn { epsilon, iters } => {
            let plan = sinkhorn_plan(cost, epsilon, iters)?;
            (0..q * q)
                .map(|p| Pair {
                    true_idx: p / q,
                    gen_idx: p % q,
                    weight: plan.data()[p],
                })
                .collect()
        }
    };
    Ok(pairs)
}

/// `sum_p w_p * cost[t_p, g_p]` on plain values.
pub fn pairs_cost(cost: &Tensor, pairs: &[Pair]) -> f64 {
    pairs.iter().map(|p| p.weight * cost.get(p.true_idx, p.gen_idx)).sum()
}

/// Differentiable weighted squared distance over fixed pairs. Weights must be
/// non-negative.
pub fn pair_loss<'t>(truth: Var<'t>, generated: Var<'t>, pairs: &[Pair]) -> Result<Var<'t>> {
    let t_idx: Vec<usize> = pairs.iter().map(|p| p.true_idx).collect();
    let g_idx: Vec<usize> = pairs.iter().map(|p| p.gen_idx).collect();
    let w: Vec<f64> = pairs
        .iter()
        .map(|p| {
            if p.weight < 0.0 {
                Err(Error::Contract(format!("negative pair weight {}", p.weight)))
            } else {
                Ok(p.weight.sqrt())
            }
        })
        .collect::<Result<_>>()?;
    let diff = generated.gather_rows(&g_idx)?.sub(truth.gather_rows(&t_idx)?)?;
    Ok(diff.scale_rows(&w)?.sq_norm())
}

/// Distribution loss between two equal-size sets, optionally letting gradients
/// reach the true side.
pub fn surrogate_loss<'t>(truth: Var<'t>, generated: Var<'t>, surrogate: Surrogate, detach_true: bool) -> Result<Var<'t>> {
    let (ts, gs) = (truth.shape(), generated.shape());
    if ts.len() != 2 || ts != gs {
        return Err(Error::Dimension(format!("true set {ts:?} vs generated set {gs:?}")));
    }
    let cost = cost_matrix(&truth.value(), &generated.value())?;
    let pairs = transport_pairs(&cost, surrogate)?;
    let truth = if detach_true { truth.detach() } else { truth };
    pair_loss(truth, generated, &pairs)
}

/// Minimum total squared distance over bijections; the true set is detached.
pub fn wasserstein_loss<'t>(truth: Var<'t>, generated: Var<'t>) -> Result<Var<'t>> {
    surrogate_loss(truth, generated, Surrogate::Hungarian, true)
}

/// Sum of nearest-neighbor squared distances in both directions; the true set
/// is detached.
pub fn chamfer_loss<'t>(truth: Var<'t>, generated: Var<'t>) -> Result<Var<'t>> {
    surrogate_loss(truth, generated, Surrogate::Chamfer, true)
}

/// `<T, C>` with `T` the entropic plan (uniform `1/q` marginals), held fixed
/// in the backward pass; the true set is detached.
pub fn sinkhorn_loss<'t>(truth: Var<'t>, generated: Var<'t>, epsilon: f64, iters: usize) -> Result<Var<'t>> {
    surrogate_loss(truth, generated, Surrogate::Sinkhorn { epsilon, iters }, true)
}
