//! Role-recovery metrics, a frozen-embedding probe, and the approximation
//! diagnostic.

mod approx;
mod classify;
mod cluster;
mod metrics;

pub use approx::{
    approximation_report, quantile, ApproxRecord, ApproxReport, ModelGenerator, NeighborGenerator, OracleGenerator,
    Quantile, DEFAULT_LEVELS,
};
pub use classify::{classify_frozen, ProbeConfig, ProbeOutcome};
pub use cluster::{agglomerative_cluster, ClusteringResult};
pub use metrics::{completeness, homogeneity, silhouette};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub num_clusters: usize,
    pub homogeneity: f64,
    pub completeness: f64,
    pub silhouette: f64,
    pub assignments: Vec<usize>,
}

/// Number of distinct values in `labels`.
pub fn num_roles(labels: &[usize]) -> usize {
    let mut ids = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

/// Cluster `emb` into `num_clusters` groups (default: one per distinct label)
/// and score the result against `labels`.
pub fn evaluate_clustering(emb: &Tensor, labels: &[usize], num_clusters: Option<usize>) -> Result<ClusterReport> {
    let c = num_clusters.unwrap_or_else(|| num_roles(labels));
    let clustering = agglomerative_cluster(emb, c)?;
    Ok(ClusterReport {
        num_clusters: clustering.num_clusters,
        homogeneity: homogeneity(labels, &clustering.assignments)?,
        completeness: completeness(labels, &clustering.assignments)?,
        silhouette: silhouette(emb, &clustering.assignments)?,
        assignments: clustering.assignments,
    })
}
