//! Undirected simple graphs with node features and optional role labels.

mod io;
mod planted;

pub use io::{
    load_dir, load_graph, parse_labels, parse_matrix_csv, write_graph, write_labels, write_matrix_csv, EDGES_FILE,
    FEATURES_FILE, LABELS_FILE,
};
pub use planted::{generate_planted, orbits, Motif, ShapeKind, ShapeSpec};

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborIndex {
    adj: Vec<Vec<usize>>,
}

impl NeighborIndex {
    fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj.iter_mut().for_each(|a| a.sort_unstable());
        NeighborIndex { adj }
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    /// Canonical `(min, max)` pairs, sorted, unique.
    edges: Vec<(usize, usize)>,
    features: Tensor,
    labels: Option<Vec<usize>>,
    index: NeighborIndex,
}

impl Graph {
    /// Build a graph, deduplicating edges. When `features` is `None` the single
    /// feature column is the node degree.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Option<Tensor>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::Contract(format!("self-loop on node {u}")));
            }
            for x in [u, v] {
                if x >= num_nodes {
                    return Err(Error::Index {
                        index: x,
                        len: num_nodes,
                    });
                }
            }
            set.insert((u.min(v), u.max(v)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let index = NeighborIndex::from_edges(num_nodes, &edges);
        let features = match features {
            Some(f) => {
                if f.rows() != num_nodes || f.shape().len() != 2 {
                    return Err(Error::Dimension(format!(
                        "feature matrix {:?} for {num_nodes} nodes",
                        f.shape()
                    )));
                }
                f
            }
            None => degree_features(&index),
        };
        if let Some(l) = &labels {
            if l.len() != num_nodes {
                return Err(Error::Dimension(format!(
                    "{} labels for {num_nodes} nodes",
                    l.len()
                )));
            }
        }
        Ok(Graph {
            num_nodes,
            edges,
            features,
            labels,
            index,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.index.neighbors(v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.index.degree(v)
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|v| self.degree(v)).collect()
    }

    pub fn with_features(&self, features: Tensor) -> Result<Graph> {
        Graph::new(
            self.num_nodes,
            self.edges.iter().copied(),
            Some(features),
            self.labels.clone(),
        )
    }

    pub fn with_labels(mut self, labels: Option<Vec<usize>>) -> Result<Graph> {
        if let Some(l) = &labels {
            if l.len() != self.num_nodes {
                return Err(Error::Dimension(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    self.num_nodes
                )));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Relabel nodes: node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Contract("not a permutation of the node set".into()));
        }
        let c = self.features.cols();
        let mut feats = vec![0.0; n * c];
        for v in 0..n {
            feats[perm[v] * c..(perm[v] + 1) * c].copy_from_slice(self.features.row(v));
        }
        let labels = self.labels.as_ref().map(|l| {
            let mut out = vec![0; n];
            for v in 0..n {
                out[perm[v]] = l[v];
            }
            out
        });
        Graph::new(
            n,
            self.edges.iter().map(|&(u, v)| (perm[u], perm[v])),
            Some(Tensor::matrix(n, c, feats)?),
            labels,
        )
    }

    /// All nodes `u != v` within shortest-path distance `k` of `v`, sorted.
    pub fn k_hop_neighborhood(&self, v: usize, k: usize) -> Result<Vec<usize>> {
        let dist = self.bfs_distances(v, Some(k))?;
        Ok((0..self.num_nodes)
            .filter(|&u| u != v && dist[u].is_some_and(|d| d <= k))
            .collect())
    }

    /// Hop distances from `v`; `None` for unreachable nodes (or nodes beyond
    /// `limit` when one is given).
    pub fn bfs_distances(&self, v: usize, limit: Option<usize>) -> Result<Vec<Option<usize>>> {
        if v >= self.num_nodes {
            return Err(Error::Index {
                index: v,
                len: self.num_nodes,
            });
        }
        let mut dist = vec![None; self.num_nodes];
        dist[v] = Some(0);
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].expect("queued nodes have a distance");
            if limit.is_some_and(|l| d >= l) {
                continue;
            }
            for &w in self.neighbors(u) {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }
}

fn degree_features(index: &NeighborIndex) -> Tensor {
    let n = index.adj.len();
    Tensor::matrix(n, 1, (0..n).map(|v| index.degree(v) as f64).collect()).expect("n x 1")
}
