use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Entropic transport plan between uniform marginals, computed with
/// log-domain Sinkhorn scaling. Each iteration updates the row potentials and
/// then the column potentials, so column marginals are exact on return.
///
/// The potentials are warm-started by epsilon scaling: the regularization
/// starts near the largest absolute cost and halves every round until it
/// reaches `epsilon`. The last round always runs at `epsilon`.
pub fn sinkhorn_plan(cost: &Tensor, epsilon: f64, iters: usize) -> Result<Tensor> {
    let shape = cost.shape();
    if shape.len() != 2 || shape[0] == 0 || shape[1] == 0 {
        return Err(Error::Dimension(format!("sinkhorn needs a non-empty matrix, got {shape:?}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) || iters == 0 {
        return Err(Error::Contract(format!(
            "sinkhorn needs epsilon > 0 and iters >= 1, got epsilon={epsilon}, iters={iters}"
        )));
    }
    let (r, c) = (shape[0], shape[1]);
    let cm = cost.data();
    let log_a = -(r as f64).ln();
    let log_b = -(c as f64).ln();
    let mut f = vec![0.0; r];
    let mut g = vec![0.0; c];
    let scale = cm.iter().fold(epsilon, |m, x| m.max(x.abs()));
    let halvings = ((scale / epsilon).log2().ceil() as usize).min(iters - 1);
    let mut eps = epsilon * 2f64.powi(halvings as i32);
    for _ in 0..iters {
        for (j, fj) in f.iter_mut().enumerate() {
            let row = &cm[j * c..(j + 1) * c];
            *fj = eps * (log_a - log_sum_exp(g.iter().zip(row).map(|(gl, cjl)| (gl - cjl) / eps)));
        }
        for (l, gl) in g.iter_mut().enumerate() {
            *gl = eps * (log_b - log_sum_exp(f.iter().enumerate().map(|(j, fj)| (fj - cm[j * c + l]) / eps)));
        }
        eps = (eps * 0.5).max(epsilon);
    }
    let mut plan = Vec::with_capacity(r * c);
    for j in 0..r {
        for l in 0..c {
            plan.push(((f[j] + g[l] - cm[j * c + l]) / epsilon).exp());
        }
    }
    if plan.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numeric(format!(
            "sinkhorn scaling diverged at epsilon={epsilon}"
        )));
    }
    Tensor::matrix(r, c, plan)
}

/// `<T, C>` for the plan returned by [`sinkhorn_plan`].
pub fn sinkhorn_cost(cost: &Tensor, epsilon: f64, iters: usize) -> Result<f64> {
    let plan = sinkhorn_plan(cost, epsilon, iters)?;
    Ok(plan.data().iter().zip(cost.data()).map(|(t, c)| t * c).sum())
}
