//! Neighbor sampling, loss assembly and the full-graph training loop.

mod config;

pub use config::{Ablations, TrainConfig};

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{draw_noise, BoundDecoder, DecoderParams};
use crate::encoder::{encode, BoundEncoder, EncoderParams, Propagation};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{Binder, Parameters};
use crate::ot::{cost_matrix, pair_loss, transport_pairs, Pair};
use crate::tensor::{read_tensors, write_tensors, Adam, AdamConfig, Tape, Tensor, Var};

/// Encoder and decoder weights trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(feature_dim: usize, cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        let encoder = EncoderParams::new(feature_dim, cfg.dim, cfg.k, cfg.encoder, rng)?;
        let decoder = DecoderParams::new(cfg.dim, cfg.k, rng);
        Ok(Model { encoder, decoder })
    }

    pub fn bind<'t>(&self, b: &mut Binder<'t>) -> (BoundEncoder<'t>, BoundDecoder<'t>) {
        (self.encoder.bind(b), self.decoder.bind(b))
    }
}

impl Parameters for Model {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.encoder.named_into(&mut out);
        self.decoder.named_into(&mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.encoder.params_into(&mut out);
        self.decoder.params_into(&mut out);
        out
    }
}

/// One line of the training log. Components are unweighted sums over nodes;
/// `total = lambda_self * self_loss + lambda_degree * degree_loss + sum(distribution)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub total: f64,
    pub self_loss: f64,
    pub degree_loss: f64,
    /// Per hop `0..k`.
    pub distribution: Vec<f64>,
    /// Seconds spent on the epoch. Kept out of the serialized log so that
    /// reruns produce identical files.
    #[serde(skip)]
    pub wall_time: f64,
}

/// `q` neighbors of `v`: distinct while the eligible pool allows, then
/// uniformly with replacement. When `v` has more than `cap` neighbors the pool
/// is a fresh uniform subset of size `cap`.
pub fn sample_neighbors<R: Rng + ?Sized>(g: &Graph, v: usize, q: usize, cap: usize, rng: &mut R) -> Result<Vec<usize>> {
    if v >= g.num_nodes() {
        return Err(Error::Index {
            index: v,
            len: g.num_nodes(),
        });
    }
    if cap == 0 {
        return Err(Error::Contract("neighbor cap must be at least 1".into()));
    }
    let mut pool = g.neighbors(v).to_vec();
    if pool.is_empty() {
        return Err(Error::Contract(format!("node {v} has no neighbors to sample")));
    }
    if pool.len() > cap {
        let (chosen, _) = pool.partial_shuffle(rng, cap);
        pool = chosen.to_vec();
    }
    let distinct = q.min(pool.len());
    let mut out = pool.partial_shuffle(rng, distinct).0.to_vec();
    while out.len() < q {
        out.push(pool[rng.gen_range(0..pool.len())]);
    }
    Ok(out)
}

/// Differentiable inputs to the reconstruction loss.
///
/// Rows of `generated[i]` and `truth[i]` come in blocks of `q`, one block per
/// node that has neighbors; `degree_pred` has one row per such node.
pub struct LossInputs<'t> {
    pub self_pred: Var<'t>,
    pub self_target: Var<'t>,
    pub degree_pred: Var<'t>,
    pub degree_target: Vec<f64>,
    pub generated: Vec<Var<'t>>,
    pub truth: Vec<Var<'t>>,
    pub q: usize,
}

pub struct LossTerms<'t> {
    pub total: Var<'t>,
    pub self_loss: f64,
    pub degree_loss: f64,
    pub distribution: Vec<f64>,
}

impl LossTerms<'_> {
    fn report(&self, epoch: usize, wall_time: f64) -> EpochReport {
        EpochReport {
            epoch,
            total: self.total.item(),
            self_loss: self.self_loss,
            degree_loss: self.degree_loss,
            distribution: self.distribution.clone(),
            wall_time,
        }
    }

    fn breakdown(&self) -> String {
        format!(
            "total={} self={} degree={} distribution={:?}",
            self.total.item(),
            self.self_loss,
            self.degree_loss,
            self.distribution
        )
    }
}

fn block_pairs(costs: &[Tensor], cfg: &TrainConfig, offset: usize) -> Result<Vec<Vec<Pair>>> {
    let shift = |pairs: Vec<Pair>| -> Vec<Pair> {
        pairs
            .into_iter()
            .map(|p| Pair {
                true_idx: p.true_idx + offset,
                gen_idx: p.gen_idx + offset,
                weight: p.weight,
            })
            .collect()
    };
    if cfg.joint_matching {
        let mut summed = costs[0].clone();
        for c in &costs[1..] {
            summed.data_mut().iter_mut().zip(c.data()).for_each(|(s, x)| *s += x);
        }
        let pairs = shift(transport_pairs(&summed, cfg.surrogate)?);
        Ok(vec![pairs; costs.len()])
    } else {
        costs
            .iter()
            .map(|c| Ok(shift(transport_pairs(c, cfg.surrogate)?)))
            .collect()
    }
}

/// Weighted sum of the self, degree and distribution terms. Ablated terms are
/// left out of the total and reported as zero. The self target is detached;
/// the true neighbor vectors are detached when `cfg.detach_true` is set.
pub fn assemble_loss<'t>(inputs: &LossInputs<'t>, cfg: &TrainConfig) -> Result<LossTerms<'t>> {
    let tape = inputs.self_pred.tape();
    let q = inputs.q;
    let k = inputs.generated.len();
    if inputs.truth.len() != k {
        return Err(Error::Dimension(format!("{k} generated hops but {} true hops", inputs.truth.len())));
    }
    let mut total = tape.constant(Tensor::scalar(0.0));

    let mut self_loss = 0.0;
    if !cfg.ablations.no_self {
        let term = inputs.self_pred.sub(inputs.self_target.detach())?.sq_norm();
        self_loss = term.item();
        total = total.add(term.scale(cfg.lambda_self))?;
    }

    let mut degree_loss = 0.0;
    if !cfg.ablations.no_degree && !inputs.degree_target.is_empty() {
        let n = inputs.degree_target.len();
        let target = tape.constant(Tensor::matrix(n, 1, inputs.degree_target.clone())?);
        let term = inputs.degree_pred.sub(target)?.sq_norm();
        degree_loss = term.item();
        total = total.add(term.scale(cfg.lambda_degree))?;
    }

    let mut distribution = vec![0.0; k];
    let blocks = inputs.degree_target.len();
    if !cfg.ablations.no_distribution && blocks > 0 {
        let gen_vals: Vec<_> = inputs.generated.iter().map(|g| g.value().clone()).collect();
        let true_vals: Vec<_> = inputs.truth.iter().map(|t| t.value().clone()).collect();
        for (g, t) in gen_vals.iter().zip(&true_vals) {
            if g.shape() != t.shape() || g.rows() != blocks * q {
                return Err(Error::Dimension(format!(
                    "generated {:?} vs true {:?} for {blocks} blocks of {q}",
                    g.shape(),
                    t.shape()
                )));
            }
        }
        let mut hop_pairs: Vec<Vec<Pair>> = vec![Vec::new(); k];
        for b in 0..blocks {
            let ids: Vec<usize> = (b * q..(b + 1) * q).collect();
            let costs = (0..k)
                .map(|i| cost_matrix(&true_vals[i].select_rows(&ids), &gen_vals[i].select_rows(&ids)))
                .collect::<Result<Vec<_>>>()?;
            for (i, pairs) in block_pairs(&costs, cfg, b * q)?.into_iter().enumerate() {
                hop_pairs[i].extend(pairs);
            }
        }
        let scale = if cfg.normalize_by_q { 1.0 / q as f64 } else { 1.0 };
        for (i, pairs) in hop_pairs.iter().enumerate() {
            let truth = if cfg.detach_true { inputs.truth[i].detach() } else { inputs.truth[i] };
            let term = pair_loss(truth, inputs.generated[i], pairs)?.scale(scale);
            distribution[i] = term.item();
            total = total.add(term)?;
        }
    }

    Ok(LossTerms {
        total,
        self_loss,
        degree_loss,
        distribution,
    })
}

/// Reconstruction loss summed over `nodes`, given the encoder outputs
/// `H^(0) .. H^(k)` on the tape. Nodes without neighbors contribute only the
/// self term. The rng is consumed the same way whatever the ablation flags.
pub fn reconstruction_loss<'t, R: Rng + ?Sized>(
    g: &Graph,
    stack: &[Var<'t>],
    dec: &BoundDecoder<'t>,
    nodes: &[usize],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossTerms<'t>> {
    let k = stack.len().checked_sub(1).filter(|&k| k >= 1).ok_or_else(|| {
        Error::Contract("layer stack needs H^(0) and at least one layer".into())
    })?;
    if dec.generators.len() != k {
        return Err(Error::Dimension(format!(
            "{} generator heads for {k} layers",
            dec.generators.len()
        )));
    }
    let (h0, hk) = (stack[0], stack[k]);
    let self_pred = dec.self_features(hk.gather_rows(nodes)?)?;
    let self_target = h0.gather_rows(nodes)?;

    let active: Vec<usize> = nodes.iter().copied().filter(|&v| g.degree(v) > 0).collect();
    let mut sampled = Vec::with_capacity(active.len() * cfg.q);
    for &v in &active {
        sampled.extend(sample_neighbors(g, v, cfg.q, cfg.neighbor_cap, rng)?);
    }
    let dim = hk.value().cols();
    let noise = draw_noise(active.len(), cfg.q, dim, rng);

    let ha = hk.gather_rows(&active)?;
    let degree_pred = dec.degree(ha)?;
    let degree_target = active.iter().map(|&v| g.degree(v) as f64).collect();
    let xi = dec.latent(ha, cfg.q, &noise)?;
    let generated = (0..k).map(|i| dec.generate(i, xi)).collect::<Result<Vec<_>>>()?;
    let truth = (0..k)
        .map(|i| stack[i].gather_rows(&sampled))
        .collect::<Result<Vec<_>>>()?;

    assemble_loss(
        &LossInputs {
            self_pred,
            self_target,
            degree_pred,
            degree_target,
            generated,
            truth,
            q: cfg.q,
        },
        cfg,
    )
}

/// Loss of a single node.
pub fn node_loss<'t, R: Rng + ?Sized>(
    g: &Graph,
    stack: &[Var<'t>],
    dec: &BoundDecoder<'t>,
    v: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossTerms<'t>> {
    if v >= g.num_nodes() {
        return Err(Error::Index {
            index: v,
            len: g.num_nodes(),
        });
    }
    reconstruction_loss(g, stack, dec, &[v], cfg, rng)
}

/// Full-graph loss for `model` on a fresh tape; used by training and by
/// gradient checks.
pub fn graph_loss<'t, R: Rng + ?Sized>(
    tape: &'t Tape,
    g: &Graph,
    prop: &Propagation,
    model: &Model,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(LossTerms<'t>, Vec<Var<'t>>)> {
    let mut b = Binder::new(tape);
    let (enc, dec) = model.bind(&mut b);
    let stack = enc.forward(g, prop)?;
    let nodes: Vec<usize> = (0..g.num_nodes()).collect();
    let terms = reconstruction_loss(g, &stack, &dec, &nodes, cfg, rng)?;
    Ok((terms, b.into_vars()))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub reports: Vec<EpochReport>,
    /// Nodes with no neighbors; they only contribute the self term.
    pub isolated: Vec<usize>,
}

pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(g, cfg, |_| {})
}

/// Train, calling `on_epoch` after every epoch.
pub fn train_with(g: &Graph, cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochReport)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if g.num_nodes() == 0 {
        return Err(Error::Contract("cannot train on an empty graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::new(g.feature_dim(), cfg, &mut rng)?;
    let prop = Propagation::new(g, cfg.encoder);
    let isolated: Vec<usize> = (0..g.num_nodes()).filter(|&v| g.degree(v) == 0).collect();
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut reports = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let tape = Tape::new();
        let (terms, vars) = graph_loss(&tape, g, &prop, &model, cfg, &mut rng)?;
        if !terms.total.item().is_finite() {
            return Err(Error::NonFinite {
                epoch,
                breakdown: terms.breakdown(),
            });
        }
        let grads = tape.backward(terms.total)?;
        let mut params = model.params_mut();
        grads.accumulate_into(&vars, params.iter_mut().map(|p| &mut **p))?;
        for p in params.iter_mut() {
            if p.grad().is_none() {
                p.accumulate_grad(&vec![0.0; p.numel()])?;
            }
        }
        adam.step(params)?;
        let report = terms.report(epoch, start.elapsed().as_secs_f64());
        on_epoch(&report);
        reports.push(report);
    }
    model.params_mut().into_iter().for_each(Tensor::clear_grad);

    Ok(TrainOutcome {
        model,
        reports,
        isolated,
    })
}

/// Final-layer embeddings `H^(k)`; no sampling involved.
pub fn embed(g: &Graph, encoder: &EncoderParams) -> Result<Tensor> {
    let stack = encode(g, encoder)?;
    Ok(stack.layers.into_iter().last().expect("non-empty stack"))
}

/// Write `<stem>.bin` / `<stem>.json` with the config and input width in the
/// manifest metadata.
pub fn save_checkpoint(stem: &Path, model: &Model, cfg: &TrainConfig) -> Result<()> {
    let meta = serde_json::json!({
        "config": cfg,
        "feature_dim": model.encoder.feature_dim(),
    });
    write_tensors(stem, &model.named_params(), meta)
}

pub fn load_checkpoint(stem: &Path) -> Result<(TrainConfig, Model)> {
    let (manifest, tensors) = read_tensors(stem)?;
    let cfg: TrainConfig = serde_json::from_value(manifest.meta.get("config").cloned().unwrap_or_default())?;
    cfg.validate()?;
    let feature_dim = manifest
        .meta
        .get("feature_dim")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Contract("checkpoint metadata lacks feature_dim".into()))? as usize;
    // Shapes come from the config; values are overwritten below.
    let mut model = Model::new(feature_dim, &cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    if names.len() != tensors.len() {
        return Err(Error::Contract(format!(
            "checkpoint has {} tensors, model expects {}",
            tensors.len(),
            names.len()
        )));
    }
    for ((want, slot), (name, t)) in names.iter().zip(model.params_mut()).zip(tensors) {
        if *want != name || slot.shape() != t.shape() {
            return Err(Error::Contract(format!(
                "checkpoint tensor {name} {:?} does not match expected {want} {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    Ok((cfg, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> Graph {
        Graph::new(6, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 4)], None, None).unwrap()
    }

    #[test]
    fn sampling_fills_with_replacement() {
        let g = Graph::new(4, [(0, 1), (0, 2), (0, 3)], None, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = sample_neighbors(&g, 0, 5, 10, &mut rng).unwrap();
            assert_eq!(s.len(), 5);
            for u in 1..4 {
                assert!(s.contains(&u));
            }
        }
    }

    #[test]
    fn sampling_respects_cap_and_is_distinct() {
        let g = Graph::new(21, (1..21).map(|u| (0, u)), None, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = sample_neighbors(&g, 0, 5, 10, &mut rng).unwrap();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 5);
        // Cap 10 of 20, then 10 draws: exactly the pool, all distinct.
        let mut full = sample_neighbors(&g, 0, 10, 10, &mut rng).unwrap();
        full.sort_unstable();
        full.dedup();
        assert_eq!(full.len(), 10);
        let a = sample_neighbors(&g, 0, 5, 10, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = sample_neighbors(&g, 0, 5, 10, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_isolated_node_is_an_error() {
        let g = graph();
        assert!(sample_neighbors(&g, 5, 3, 10, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let g = graph();
        let cfg = TrainConfig {
            epochs: 0,
            dim: 4,
            k: 2,
            ..Default::default()
        };
        let out = train(&g, &cfg).unwrap();
        let init = Model::new(1, &cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        assert_eq!(out.model, init);
        assert!(out.reports.is_empty());
        assert_eq!(out.isolated, vec![5]);
    }

    #[test]
    fn all_terms_disabled_gives_zero() {
        let g = graph();
        let cfg = TrainConfig {
            epochs: 3,
            dim: 4,
            k: 2,
            lambda_self: 0.0,
            lambda_degree: 0.0,
            ablations: Ablations {
                no_distribution: true,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = train(&g, &cfg).unwrap();
        assert!(out.reports.iter().all(|r| r.total == 0.0));
    }

    #[test]
    fn report_total_is_weighted_sum() {
        let g = graph();
        let cfg = TrainConfig {
            epochs: 4,
            dim: 4,
            k: 2,
            lambda_self: 0.3,
            lambda_degree: 0.7,
            ..Default::default()
        };
        for r in train(&g, &cfg).unwrap().reports {
            let want = 0.3 * r.self_loss + 0.7 * r.degree_loss + r.distribution.iter().sum::<f64>();
            assert!((r.total - want).abs() <= 1e-9 * want.abs().max(1.0));
            assert_eq!(r.distribution.len(), 2);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = graph();
        let cfg = TrainConfig {
            epochs: 2,
            dim: 3,
            k: 2,
            ..Default::default()
        };
        let out = train(&g, &cfg).unwrap();
        let stem = dir.path().join("model");
        save_checkpoint(&stem, &out.model, &cfg).unwrap();
        let (cfg2, model2) = load_checkpoint(&stem).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(model2, out.model);
        assert!(load_checkpoint(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn embed_is_deterministic() {
        let g = graph();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Model::new(1, &TrainConfig { dim: 5, ..Default::default() }, &mut rng).unwrap();
        let a = embed(&g, &model.encoder).unwrap();
        let b = embed(&g, &model.encoder).unwrap();
        assert_eq!(a.shape(), &[6, 5]);
        assert_eq!(a.data(), b.data());
    }
}
