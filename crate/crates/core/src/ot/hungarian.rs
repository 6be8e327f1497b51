use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A minimum-cost perfect matching: row `j` is matched to column `perm[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub perm: Vec<usize>,
    /// `sum_j cost[j, perm[j]]`, accumulated in row order.
    pub total: f64,
}

/// Exact linear assignment by shortest augmenting paths with dual
/// potentials, `O(q^3)`.
pub fn hungarian(cost: &Tensor) -> Result<Assignment> {
    let shape = cost.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Dimension(format!("assignment needs a square matrix, got {shape:?}")));
    }
    if let Some(pos) = cost.data().iter().position(|c| !c.is_finite()) {
        return Err(Error::Contract(format!(
            "non-finite cost {} at ({}, {})",
            cost.data()[pos],
            pos / shape[1],
            pos % shape[1]
        )));
    }
    let n = shape[0];
    let c = |i: usize, j: usize| cost.data()[i * n + j];

    // 1-based columns; column 0 is a sentinel holding the row being inserted.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = c(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(i, &j)| c(i, j)).sum();
    Ok(Assignment { perm, total })
}
