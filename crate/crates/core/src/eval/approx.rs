use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode_all, DecoderParams};
use crate::encoder::LayerStack;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::ot::{cost_matrix, hungarian};
use crate::tensor::Tensor;
use crate::train::sample_neighbors;

/// Source of generated neighbor vectors for the approximation diagnostic.
pub trait NeighborGenerator {
    /// For node `v`, one `q x m` matrix per hop `0..k`. `sampled` holds the
    /// `q` true neighbors drawn for this node.
    fn generate(&mut self, v: usize, sampled: &[usize], q: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Tensor>>;
}

/// The trained decoder, reading `H^(k)`.
pub struct ModelGenerator<'a> {
    pub decoder: &'a DecoderParams,
    pub stack: &'a LayerStack,
}

impl NeighborGenerator for ModelGenerator<'_> {
    fn generate(&mut self, v: usize, _sampled: &[usize], q: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Tensor>> {
        Ok(decode_all(self.decoder, self.stack, v, q, rng)?.generated)
    }
}

/// Emits the true sampled neighbor vectors themselves.
pub struct OracleGenerator<'a> {
    pub stack: &'a LayerStack,
}

impl NeighborGenerator for OracleGenerator<'_> {
    fn generate(&mut self, _v: usize, sampled: &[usize], _q: usize, _rng: &mut ChaCha8Rng) -> Result<Vec<Tensor>> {
        Ok(self.stack.layers[..self.stack.k()]
            .iter()
            .map(|h| h.select_rows(sampled))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxRecord {
    pub node: usize,
    /// Mean squared norm of the generated vectors of the last hop.
    pub x: f64,
    /// Minimum joint matching error over all hops, divided by `q * k`.
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub q: usize,
    pub records: Vec<ApproxRecord>,
    /// Nodes left out because `x = 0`.
    pub zero_x: Vec<usize>,
    /// Nodes without neighbors.
    pub isolated: usize,
    /// Quantiles of `y / x`.
    pub quantiles: Vec<Quantile>,
}

pub const DEFAULT_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Linear interpolation between order statistics at position `p * (n - 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Compare generated and true sampled neighbors for every node that has
/// neighbors, and summarize the ratio `y / x`.
pub fn approximation_report(
    g: &Graph,
    stack: &LayerStack,
    generator: &mut dyn NeighborGenerator,
    q: usize,
    cap: usize,
    levels: &[f64],
    seed: u64,
) -> Result<ApproxReport> {
    let k = stack.k();
    if k == 0 || stack.layers.iter().any(|h| h.rows() != g.num_nodes()) {
        return Err(Error::Dimension("layer stack does not match the graph".into()));
    }
    if q == 0 {
        return Err(Error::Contract("q must be at least 1".into()));
    }
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Contract(format!("quantile level {l} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut zero_x = Vec::new();
    let mut isolated = 0;
    for v in 0..g.num_nodes() {
        if g.degree(v) == 0 {
            isolated += 1;
            continue;
        }
        let sampled = sample_neighbors(g, v, q, cap, &mut rng)?;
        let generated = generator.generate(v, &sampled, q, &mut rng)?;
        if generated.len() != k {
            return Err(Error::Dimension(format!("generator returned {} hops, expected {k}", generated.len())));
        }
        let mut summed = Tensor::zeros(&[q, q]);
        for (i, gen) in generated.iter().enumerate() {
            let c = cost_matrix(&stack.layers[i].select_rows(&sampled), gen)?;
            summed.data_mut().iter_mut().zip(c.data()).for_each(|(s, x)| *s += x);
        }
        let y = hungarian(&summed)?.total / (q * k) as f64;
        let last = &generated[k - 1];
        let x = last.data().iter().map(|a| a * a).sum::<f64>() / q as f64;
        if x == 0.0 {
            zero_x.push(v);
        } else {
            records.push(ApproxRecord { node: v, x, y });
        }
    }
    if records.is_empty() {
        return Err(Error::Degenerate("no node with neighbors and non-zero x".into()));
    }
    let mut ratios: Vec<f64> = records.iter().map(|r| r.y / r.x).collect();
    ratios.sort_by(f64::total_cmp);
    let quantiles = levels
        .iter()
        .map(|&level| Quantile {
            level,
            value: quantile(&ratios, level),
        })
        .collect();
    Ok(ApproxReport {
        q,
        records,
        zero_x,
        isolated,
        quantiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolated_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.25), 2.0);
        assert_eq!(quantile(&xs, 0.95), 4.8);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn oracle_gives_zero_ratios() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)], None, None).unwrap();
        let h = |s: f64| Tensor::matrix(4, 2, (0..8).map(|i| s * (i as f64 + 1.0)).collect()).unwrap();
        let stack = LayerStack {
            layers: vec![h(1.0), h(-0.5), h(2.0)],
        };
        let mut oracle = OracleGenerator { stack: &stack };
        let r = approximation_report(&g, &stack, &mut oracle, 3, 10, &DEFAULT_LEVELS, 1).unwrap();
        assert_eq!(r.records.len(), 4);
        assert!(r.records.iter().all(|rec| rec.y == 0.0 && rec.x > 0.0));
        assert!(r.quantiles.iter().all(|q| q.value == 0.0));
    }

    #[test]
    fn zero_x_nodes_are_excluded() {
        let g = Graph::new(3, [(0, 1)], None, None).unwrap();
        let stack = LayerStack {
            layers: vec![Tensor::zeros(&[3, 2]), Tensor::zeros(&[3, 2])],
        };
        let mut oracle = OracleGenerator { stack: &stack };
        let err = approximation_report(&g, &stack, &mut oracle, 2, 10, &DEFAULT_LEVELS, 0).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }
}
