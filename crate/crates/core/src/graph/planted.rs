//! Planted structural-equivalence graphs: small motifs hung off a cycle.
//!
//! Node layout: cycle nodes come first (`0..cycle_len`), then the motifs in
//! placement order. Motif `i` is attached at cycle position
//! `i * cycle_len / count` by a single edge from its anchor node.
//!
//! Role labels are the classes of the coarsest equitable partition (colour
//! refinement) of the *unperturbed* construction, numbered by first
//! appearance. On these graphs that partition coincides with the automorphism
//! orbits, so two nodes share a label exactly when they play the same
//! structural role. Perturbation edits edges after labelling and leaves the
//! labels untouched.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motif {
    /// 4-cycle `0-1-3-2` with a roof `4` on the top corners `2, 3`; anchored at the roof.
    House,
    /// Hub `0` with `size` leaves joined in a path; anchored at the hub.
    Fan,
    /// Hub `0` with `size` leaves; anchored at the hub.
    Star,
}

impl Motif {
    /// `(node count, local edges, anchor)`.
    pub fn build(self, size: usize) -> (usize, Vec<(usize, usize)>, usize) {
        match self {
            Motif::House => (5, vec![(0, 1), (0, 2), (1, 3), (2, 3), (2, 4), (3, 4)], 4),
            Motif::Fan => {
                let mut e: Vec<_> = (1..=size).map(|i| (0, i)).collect();
                e.extend((1..size).map(|i| (i, i + 1)));
                (size + 1, e, 0)
            }
            Motif::Star => (size + 1, (1..=size).map(|i| (0, i)).collect(), 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    House,
    Fan,
    Star,
    /// House, fan and star placed round-robin.
    Varied,
}

impl ShapeKind {
    fn motif_at(self, i: usize) -> Motif {
        match self {
            ShapeKind::House => Motif::House,
            ShapeKind::Fan => Motif::Fan,
            ShapeKind::Star => Motif::Star,
            ShapeKind::Varied => [Motif::House, Motif::Fan, Motif::Star][i % 3],
        }
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "house" => Ok(ShapeKind::House),
            "fan" => Ok(ShapeKind::Fan),
            "star" => Ok(ShapeKind::Star),
            "varied" => Ok(ShapeKind::Varied),
            other => Err(Error::Contract(format!(
                "unknown shape {other:?} (expected house, fan, star or varied)"
            ))),
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ShapeKind::House => "house",
            ShapeKind::Fan => "fan",
            ShapeKind::Star => "star",
            ShapeKind::Varied => "varied",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub shape: ShapeKind,
    /// Leaf count for fans and stars; ignored by houses.
    pub size: usize,
    pub count: usize,
    pub cycle_len: usize,
    /// Number of random add-or-delete edge events applied after labelling.
    pub perturb: usize,
    pub seed: u64,
}

impl ShapeSpec {
    /// Ten houses on a 40-cycle.
    pub fn house() -> Self {
        ShapeSpec {
            shape: ShapeKind::House,
            size: 0,
            count: 10,
            cycle_len: 40,
            perturb: 0,
            seed: 0,
        }
    }

    /// The house graph with five random edge edits.
    pub fn house_perturbed(seed: u64) -> Self {
        ShapeSpec {
            perturb: 5,
            seed,
            ..Self::house()
        }
    }

    /// Twelve motifs (house, 5-leaf fan, 5-leaf star, round-robin) on a 48-cycle.
    pub fn varied() -> Self {
        ShapeSpec {
            shape: ShapeKind::Varied,
            size: 5,
            count: 12,
            cycle_len: 48,
            perturb: 0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.cycle_len < 3 {
            return Err(Error::Contract(format!(
                "cycle length {} is too short for a simple cycle",
                self.cycle_len
            )));
        }
        if self.count > self.cycle_len {
            return Err(Error::Contract(format!(
                "{} motifs do not fit on a cycle of length {}",
                self.count, self.cycle_len
            )));
        }
        let needs_size = matches!(self.shape, ShapeKind::Fan | ShapeKind::Star | ShapeKind::Varied);
        if needs_size && self.count > 0 && self.size == 0 {
            return Err(Error::Contract(format!("{} motifs need size >= 1", self.shape)));
        }
        Ok(())
    }
}

/// Build the planted graph described by `spec`.
pub fn generate_planted(spec: &ShapeSpec) -> Result<Graph> {
    spec.validate()?;
    let l = spec.cycle_len;
    let mut edges: Vec<(usize, usize)> = (0..l).map(|i| (i, (i + 1) % l)).collect();
    let mut n = l;
    for i in 0..spec.count {
        let (size, local, anchor) = spec.shape.motif_at(i).build(spec.size);
        edges.extend(local.iter().map(|&(a, b)| (n + a, n + b)));
        edges.push((i * l / spec.count, n + anchor));
        n += size;
    }
    let labels = colour_refinement(n, &edges);
    let edges = perturb(n, edges, spec.perturb, spec.seed);
    Graph::new(n, edges, None, Some(labels))
}

fn perturb(n: usize, edges: Vec<(usize, usize)>, events: usize, seed: u64) -> Vec<(usize, usize)> {
    if events == 0 {
        return edges;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list: Vec<(usize, usize)> = edges.into_iter().map(|(u, v)| (u.min(v), u.max(v))).collect();
    let mut present: HashSet<(usize, usize)> = list.iter().copied().collect();
    let max_edges = n * n.saturating_sub(1) / 2;
    for _ in 0..events {
        let add = rng.gen_bool(0.5);
        if (add || list.is_empty()) && list.len() < max_edges {
            loop {
                let u = rng.gen_range(0..n);
                let v = rng.gen_range(0..n);
                let e = (u.min(v), u.max(v));
                if u != v && present.insert(e) {
                    list.push(e);
                    break;
                }
            }
        } else if !list.is_empty() {
            let e = list.swap_remove(rng.gen_range(0..list.len()));
            present.remove(&e);
        }
    }
    list
}

/// Stable colour refinement starting from degrees; colours numbered by first
/// appearance in node order.
pub(crate) fn colour_refinement(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut colour: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut classes = count_distinct(&colour);
    loop {
        let sigs: Vec<(usize, Vec<usize>)> = (0..n)
            .map(|v| {
                let mut nb: Vec<usize> = adj[v].iter().map(|&u| colour[u]).collect();
                nb.sort_unstable();
                (colour[v], nb)
            })
            .collect();
        let mut table = BTreeMap::new();
        for s in &sigs {
            let next = table.len();
            table.entry(s.clone()).or_insert(next);
        }
        let next: Vec<usize> = sigs.iter().map(|s| table[s]).collect();
        let next_classes = table.len();
        colour = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    let mut first = BTreeMap::new();
    colour
        .iter()
        .map(|c| {
            let id = first.len();
            *first.entry(*c).or_insert(id)
        })
        .collect()
}

fn count_distinct(xs: &[usize]) -> usize {
    xs.iter().collect::<HashSet<_>>().len()
}

/// Automorphism orbits of a small graph, found by backtracking search.
///
/// Returns one orbit id per node (numbered by first appearance). Exponential
/// in the worst case; meant for motif-sized graphs.
pub fn orbits(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in edges {
        adj[u][v] = true;
        adj[v][u] = true;
    }
    let deg: Vec<usize> = adj.iter().map(|r| r.iter().filter(|&&x| x).count()).collect();
    let mut orbit = vec![usize::MAX; n];
    let mut next = 0;
    for u in 0..n {
        if orbit[u] != usize::MAX {
            continue;
        }
        orbit[u] = next;
        for w in u + 1..n {
            if orbit[w] == usize::MAX && deg[u] == deg[w] && maps_to(&adj, &deg, u, w) {
                orbit[w] = next;
            }
        }
        next += 1;
    }
    orbit
}

/// Is there an automorphism sending `u` to `w`?
fn maps_to(adj: &[Vec<bool>], deg: &[usize], u: usize, w: usize) -> bool {
    let n = adj.len();
    let mut image = vec![usize::MAX; n];
    let mut used = vec![false; n];
    image[u] = w;
    used[w] = true;
    // Breadth-first order keeps every new node adjacent to an assigned one,
    // which prunes the search early.
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in std::iter::once(u).chain(0..n) {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut head = order.len();
        order.push(start);
        while head < order.len() {
            let x = order[head];
            head += 1;
            for y in 0..n {
                if adj[x][y] && !seen[y] {
                    seen[y] = true;
                    order.push(y);
                }
            }
        }
    }
    extend(adj, deg, &order, 1, &mut image, &mut used)
}

fn extend(adj: &[Vec<bool>], deg: &[usize], order: &[usize], depth: usize, image: &mut [usize], used: &mut [bool]) -> bool {
    if depth == order.len() {
        return true;
    }
    let x = order[depth];
    for y in 0..adj.len() {
        if used[y] || deg[x] != deg[y] {
            continue;
        }
        let consistent = order[..depth].iter().all(|&p| adj[x][p] == adj[y][image[p]]);
        if !consistent {
            continue;
        }
        image[x] = y;
        used[y] = true;
        if extend(adj, deg, order, depth + 1, image, used) {
            return true;
        }
        used[y] = false;
        image[x] = usize::MAX;
    }
    false
}
