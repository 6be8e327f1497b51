use serde::{Deserialize, Serialize};

use crate::encoder::EncoderKind;
use crate::error::{Error, Result};
use crate::ot::Surrogate;

/// Loss terms that can be switched off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub no_degree: bool,
    pub no_distribution: bool,
    pub no_self: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Encoder layers (and generator heads).
    pub k: usize,
    /// Embedding width `m`.
    pub dim: usize,
    /// Neighbor samples per node per epoch.
    pub q: usize,
    pub lambda_self: f64,
    pub lambda_degree: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub surrogate: Surrogate,
    pub ablations: Ablations,
    /// Neighbors eligible for sampling per node per epoch.
    pub neighbor_cap: usize,
    pub encoder: EncoderKind,
    /// Stop gradients from reaching the true neighbor vectors.
    pub detach_true: bool,
    /// Divide each hop's distribution loss by `q`.
    pub normalize_by_q: bool,
    /// One matching per node over the summed cost of all hops, rather than
    /// one matching per hop.
    pub joint_matching: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 3,
            dim: 64,
            q: 5,
            lambda_self: 1e-2,
            lambda_degree: 1e-2,
            lr: 5e-3,
            epochs: 300,
            seed: 0,
            surrogate: Surrogate::Hungarian,
            ablations: Ablations::default(),
            neighbor_cap: 10,
            encoder: EncoderKind::Gcn,
            detach_true: true,
            normalize_by_q: false,
            joint_matching: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Contract(msg));
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.dim == 0 {
            return fail("dim must be at least 1".into());
        }
        if self.q == 0 {
            return fail("q must be at least 1".into());
        }
        if self.neighbor_cap == 0 {
            return fail("neighbor_cap must be at least 1".into());
        }
        if !(self.lambda_self >= 0.0 && self.lambda_degree >= 0.0) {
            return fail(format!(
                "loss weights must be non-negative, got lambda_self={}, lambda_degree={}",
                self.lambda_self, self.lambda_degree
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if let Surrogate::Sinkhorn { epsilon, iters } = self.surrogate {
            if !(epsilon > 0.0) || iters == 0 {
                return fail(format!("sinkhorn needs epsilon > 0 and iters >= 1, got {epsilon}, {iters}"));
            }
        }
        Ok(())
    }
}
