//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nbrecon::encoder::{encode, propagate, EncoderKind, EncoderParams, Propagation};
use nbrecon::graph::Graph;
use nbrecon::nn::{Binder, Linear, Parameters};
use nbrecon::tensor::{Tape, Tensor, Var};
use nbrecon::train::{graph_loss, node_loss, reconstruction_loss, Model, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum assignment cost by enumerating every permutation (Heap's algorithm).
pub fn brute_force_assignment(cost: &Tensor) -> f64 {
    let n = cost.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |p: &[usize]| (0..n).map(|i| cost.get(i, p[i])).sum::<f64>();
    let mut best = total(&perm);
    let mut c = vec![0; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Homogeneity as mutual information over label entropy, base-2 logs.
pub fn ref_homogeneity(labels: &[usize], clusters: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pl: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pc: BTreeMap<usize, f64> = BTreeMap::new();
    for (&l, &c) in labels.iter().zip(clusters) {
        *table.entry((l, c)).or_default() += 1.0 / n;
        *pl.entry(l).or_default() += 1.0 / n;
        *pc.entry(c).or_default() += 1.0 / n;
    }
    let h_l: f64 = pl.values().map(|p| -p * p.log2()).sum();
    if h_l == 0.0 {
        return 1.0;
    }
    let mi: f64 = table.iter().map(|(&(l, c), &p)| p * (p / (pl[&l] * pc[&c])).log2()).sum();
    mi / h_l
}

pub fn ref_completeness(labels: &[usize], clusters: &[usize]) -> f64 {
    ref_homogeneity(clusters, labels)
}

/// Silhouette straight from the definition, one point at a time.
pub fn ref_silhouette(emb: &Tensor, clusters: &[usize]) -> f64 {
    let n = emb.rows();
    let dist = |i: usize, j: usize| -> f64 {
        emb.row(i)
            .iter()
            .zip(emb.row(j))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut ids = clusters.to_vec();
    ids.sort();
    ids.dedup();
    let mut s = 0.0;
    for i in 0..n {
        let mean_to = |c: usize, skip_self: bool| -> Option<f64> {
            let members: Vec<usize> = (0..n).filter(|&j| clusters[j] == c && !(skip_self && j == i)).collect();
            if members.is_empty() {
                None
            } else {
                Some(members.iter().map(|&j| dist(i, j)).sum::<f64>() / members.len() as f64)
            }
        };
        let Some(a) = mean_to(clusters[i], true) else {
            continue;
        };
        let b = ids
            .iter()
            .filter(|&&c| c != clusters[i])
            .filter_map(|&c| mean_to(c, false))
            .fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            s += (b - a) / a.max(b);
        }
    }
    s / n as f64
}

/// All-pairs hop distances by repeated relaxation.
pub fn floyd_distances(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(u, v) in edges {
        d[u][v] = 1;
        d[v][u] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub fn random_edges<R: Rng>(n: usize, p: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_graph(n: usize, p: f64, features: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = random_edges(n, p, &mut rng);
    let x = random_matrix(n, features, &mut rng);
    Graph::new(n, edges, Some(x), None).unwrap()
}

/// Zero `H^(0)` outside the `k`-hop ball of `v` and compare `h_v^(k)` bit for bit.
pub fn receptive_field_holds(g: &Graph, v: usize, k: usize, kind: EncoderKind, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 4;
    let params = EncoderParams::new(g.feature_dim(), dim, k, kind, &mut rng).unwrap();
    let h0 = random_matrix(g.num_nodes(), dim, &mut rng);
    let mut keep = g.k_hop_neighborhood(v, k).unwrap();
    keep.push(v);
    let mut masked = Tensor::zeros(&[g.num_nodes(), dim]);
    for &u in &keep {
        masked.data_mut()[u * dim..(u + 1) * dim].copy_from_slice(h0.row(u));
    }
    let full = propagate(g, &params, &h0).unwrap();
    let cut = propagate(g, &params, &masked).unwrap();
    let a: Vec<u64> = full.output().row(v).iter().map(|x| x.to_bits()).collect();
    let b: Vec<u64> = cut.output().row(v).iter().map(|x| x.to_bits()).collect();
    a == b
}

/// Worst finite-difference discrepancy over every parameter entry.
pub struct GradCheck {
    pub entries: usize,
    pub max_rel: f64,
    pub worst: String,
}

/// Relative error with an absolute floor so that entries whose true
/// derivative is zero are not judged by rounding noise alone.
pub const FD_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Full training loss with the detached quantities (`H^(0) .. H^(k-1)`, which
/// supply the self target and the true neighbor vectors) held at `frozen`.
/// At `frozen = encode(model)` its exact gradient is what training uses.
fn frozen_target_loss<'t>(
    tape: &'t Tape,
    g: &Graph,
    prop: &Propagation,
    model: &Model,
    frozen: &[Tensor],
    cfg: &TrainConfig,
    rng_seed: u64,
) -> (Var<'t>, Vec<Var<'t>>) {
    let mut b = Binder::new(tape);
    let (enc, dec) = model.bind(&mut b);
    let live = enc.forward(g, prop).unwrap();
    let mut stack: Vec<Var<'t>> = frozen.iter().map(|t| tape.constant(t.clone())).collect();
    stack.push(live[cfg.k]);
    let nodes: Vec<usize> = (0..g.num_nodes()).collect();
    let terms =
        reconstruction_loss(g, &stack, &dec, &nodes, cfg, &mut ChaCha8Rng::seed_from_u64(rng_seed)).unwrap();
    (terms.total, b.into_vars())
}

/// Central differences of the full training loss against the tape gradient.
/// The rng is re-seeded for every evaluation so sampling and noise are fixed.
pub fn gradient_check(g: &Graph, cfg: &TrainConfig, rng_seed: u64, h: f64) -> GradCheck {
    assert!(cfg.detach_true, "targets are frozen, which presumes detached truth");
    let prop = Propagation::new(g, cfg.encoder);
    let mut model = Model::new(g.feature_dim(), cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
    let frozen: Vec<Tensor> = encode(g, &model.encoder).unwrap().layers[..cfg.k].to_vec();

    let analytic: Vec<Vec<f64>> = {
        let tape = Tape::new();
        let (total, vars) = frozen_target_loss(&tape, g, &prop, &model, &frozen, cfg, rng_seed);
        // The same quantity as the training objective at this point.
        let (terms, _) = graph_loss(&tape, g, &prop, &model, cfg, &mut ChaCha8Rng::seed_from_u64(rng_seed)).unwrap();
        assert_eq!(total.item(), terms.total.item());
        let grads = tape.backward(total).unwrap();
        vars.iter()
            .zip(model.named_params())
            .map(|(&v, (_, t))| grads.wrt(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
            .collect()
    };
    let loss = |m: &Model| -> f64 {
        let tape = Tape::new();
        let (total, _) = frozen_target_loss(&tape, g, &prop, m, &frozen, cfg, rng_seed);
        total.item()
    };
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    let mut out = GradCheck {
        entries: 0,
        max_rel: 0.0,
        worst: String::new(),
    };
    for (p, name) in names.iter().enumerate() {
        let numel = model.named_params()[p].1.numel();
        for j in 0..numel {
            let orig = model.params_mut()[p].data()[j];
            model.params_mut()[p].data_mut()[j] = orig + h;
            let up = loss(&model);
            model.params_mut()[p].data_mut()[j] = orig - h;
            let down = loss(&model);
            model.params_mut()[p].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = relative_error(analytic[p][j], numeric);
            out.entries += 1;
            if rel > out.max_rel {
                out.max_rel = rel;
                out.worst = format!("{name}[{j}] analytic={} numeric={numeric}", analytic[p][j]);
            }
        }
    }
    out
}

/// The graph used by the gradient suite: 10 nodes, 3 feature columns.
pub fn gradient_graph() -> Graph {
    random_graph(10, 0.35, 3, 17)
}

pub fn gradient_config() -> TrainConfig {
    TrainConfig {
        k: 2,
        q: 3,
        dim: 4,
        seed: 5,
        ..TrainConfig::default()
    }
}

/// Path `0 - 1 - 2` with two feature columns.
pub fn path3() -> Graph {
    let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0]]);
    Graph::new(3, [(0, 1), (1, 2)], Some(x), None).unwrap()
}

/// Decoder weights chosen so that, for an endpoint of a path, every decoder
/// output equals its target: the last layer of each head is a bias holding
/// the target, and the log-variance bias removes the noise.
pub fn hand_assembled(g: &Graph, v: usize, cfg: &TrainConfig) -> Model {
    let mut model = Model::new(g.feature_dim(), cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let stack = encode(g, &model.encoder).unwrap();
    let u = g.neighbors(v)[0];
    let set_head = |layer: &mut Linear, target: &[f64]| {
        layer.weight.data_mut().fill(0.0);
        layer.bias.data_mut().copy_from_slice(target);
    };
    let dec = &mut model.decoder;
    set_head(dec.self_fnn.layers.last_mut().unwrap(), stack.layers[0].row(v));
    set_head(dec.degree_fnn.layers.last_mut().unwrap(), &[(g.degree(v) as f64).ln()]);
    dec.logvar.bias.data_mut().fill(-2000.0);
    for (i, gen) in dec.generators.iter_mut().enumerate() {
        set_head(gen.layers.last_mut().unwrap(), stack.layers[i].row(u));
    }
    model
}


/// `(node_loss, gradient norm over every parameter)` for the hand-assembled
/// model at endpoint `v`.
pub fn fixed_point(g: &Graph, v: usize, cfg: &TrainConfig) -> (f64, f64) {
    let model = hand_assembled(g, v, cfg);
    let tape = Tape::new();
    let mut b = Binder::new(&tape);
    let (enc, dec) = model.bind(&mut b);
    let stack = enc.forward(g, &Propagation::new(g, cfg.encoder)).unwrap();
    let terms = node_loss(g, &stack, &dec, v, cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let loss = terms.total.item();
    let grads = tape.backward(terms.total).unwrap();
    let norm = b
        .into_vars()
        .iter()
        .filter_map(|&var| grads.wrt(var))
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    (loss, norm)
}
