use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusteringResult {
    /// Dense ids `0..num_clusters`, numbered by first appearance in node order.
    pub assignments: Vec<usize>,
    pub num_clusters: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Edge key `(squared distance, smaller id, larger id)`; a strict total order
/// over node pairs, which makes the merge sequence unique.
type Key = (f64, usize, usize);

fn key(d: f64, u: usize, v: usize) -> Key {
    (d, u.min(v), u.max(v))
}

fn less(a: &Key, b: &Key) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).is_lt()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage agglomerative clustering on Euclidean distances, cut when
/// `num_clusters` clusters remain. Merges follow the minimum spanning tree in
/// `(distance, smaller id, larger id)` order.
pub fn agglomerative_cluster(emb: &Tensor, num_clusters: usize) -> Result<ClusteringResult> {
    let n = emb.rows();
    if emb.shape().len() != 2 {
        return Err(Error::Dimension(format!("embedding must be a matrix, got {:?}", emb.shape())));
    }
    if num_clusters == 0 || num_clusters > n {
        return Err(Error::Contract(format!("cannot cut {n} points into {num_clusters} clusters")));
    }

    // Prim's algorithm on the complete graph.
    let mut in_tree = vec![false; n];
    let mut best: Vec<Option<Key>> = vec![None; n];
    let mut mst = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let row = emb.row(current);
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let cand = key(sq_dist(row, emb.row(v)), current, v);
            if best[v].map_or(true, |b| less(&cand, &b)) {
                best[v] = Some(cand);
            }
        }
        let next = (0..n)
            .filter(|&v| !in_tree[v])
            .min_by(|&a, &b| {
                let (ka, kb) = (best[a].expect("seen"), best[b].expect("seen"));
                if less(&ka, &kb) {
                    std::cmp::Ordering::Less
                } else if less(&kb, &ka) {
                    std::cmp::Ordering::Greater
                } else {
                    a.cmp(&b)
                }
            })
            .expect("a node outside the tree");
        mst.push(best[next].expect("seen"));
        in_tree[next] = true;
        current = next;
    }

    mst.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut parent: Vec<usize> = (0..n).collect();
    for &(_, u, v) in mst.iter().take(n - num_clusters) {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        parent[ru.max(rv)] = ru.min(rv);
    }

    let mut ids = vec![usize::MAX; n];
    let mut assignments = Vec::with_capacity(n);
    let mut next_id = 0;
    for v in 0..n {
        let r = find(&mut parent, v);
        if ids[r] == usize::MAX {
            ids[r] = next_id;
            next_id += 1;
        }
        assignments.push(ids[r]);
    }
    Ok(ClusteringResult {
        assignments,
        num_clusters: next_id,
    })
}
