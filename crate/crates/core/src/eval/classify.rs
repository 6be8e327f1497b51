use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Binder, Mlp, Parameters};
use crate::tensor::{Adam, AdamConfig, Tape, Tensor};

/// Settings for the frozen-embedding probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Train / validation / test fractions.
    pub split: (f64, f64, f64),
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Further seeds tried when a class is missing from the training split.
    pub max_retries: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            split: (0.6, 0.2, 0.2),
            hidden: 64,
            epochs: 200,
            lr: 0.01,
            max_retries: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    /// Test accuracy at the epoch with the best validation accuracy.
    pub accuracy: f64,
    /// Seed of the split actually used.
    pub seed: u64,
    /// Splits rejected because a class was absent from training.
    pub resampled: usize,
}

fn dense_classes(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let dense = labels.iter().map(|l| ids.binary_search(l).expect("present")).collect();
    (dense, ids.len())
}

fn accuracy(logits: &Tensor, ids: &[usize], targets: &[usize]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let hits = ids
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let pred = (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best });
            pred == targets[i]
        })
        .count();
    hits as f64 / ids.len() as f64
}

/// Train a 4-layer MLP on frozen embeddings and report test accuracy.
pub fn classify_frozen(emb: &Tensor, labels: &[usize], cfg: &ProbeConfig, seed: u64) -> Result<ProbeOutcome> {
    let n = emb.rows();
    if emb.shape().len() != 2 || labels.len() != n {
        return Err(Error::Dimension(format!("embedding {:?} vs {} labels", emb.shape(), labels.len())));
    }
    let (tr, va, te) = cfg.split;
    if tr <= 0.0 || va < 0.0 || te <= 0.0 || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("split fractions {:?} must be positive and sum to 1", cfg.split)));
    }
    let n_train = (tr * n as f64).round() as usize;
    let n_val = (va * n as f64).round() as usize;
    if n_train == 0 || n_train + n_val >= n {
        return Err(Error::Contract(format!("{n} nodes are too few for split {:?}", cfg.split)));
    }
    let (targets, num_classes) = dense_classes(labels);

    let mut order: Vec<usize> = (0..n).collect();
    let mut chosen = None;
    for attempt in 0..=cfg.max_retries {
        let s = seed.wrapping_add(attempt as u64);
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
        let mut present = vec![false; num_classes];
        order[..n_train].iter().for_each(|&i| present[targets[i]] = true);
        if present.iter().all(|&p| p) {
            chosen = Some((s, attempt));
            break;
        }
    }
    let (split_seed, resampled) = chosen.ok_or_else(|| {
        Error::Contract(format!(
            "no split with every class in training after {} attempts",
            cfg.max_retries + 1
        ))
    })?;
    let (train_ids, rest) = order.split_at(n_train);
    let (val_ids, test_ids) = rest.split_at(n_val);

    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let m = emb.cols();
    let mut mlp = Mlp::new(&[m, cfg.hidden, cfg.hidden, cfg.hidden, num_classes], &mut rng);
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let x_train = emb.select_rows(train_ids);
    let y_train: Vec<usize> = train_ids.iter().map(|&i| targets[i]).collect();

    let mut best = (f64::NEG_INFINITY, 0.0);
    for _ in 0..cfg.epochs {
        let tape = Tape::new();
        let mut b = Binder::new(&tape);
        let bound = mlp.bind(&mut b);
        let loss = bound.forward(tape.constant(x_train.clone()))?.softmax_cross_entropy(&y_train)?;
        let grads = tape.backward(loss)?;
        let vars = b.into_vars();
        let mut params = mlp.params_mut();
        grads.accumulate_into(&vars, params.iter_mut().map(|p| &mut **p))?;
        adam.step(params)?;

        let logits = mlp.eval(emb)?;
        let val = if val_ids.is_empty() { 0.0 } else { accuracy(&logits, val_ids, &targets) };
        if val > best.0 {
            best = (val, accuracy(&logits, test_ids, &targets));
        }
    }
    if cfg.epochs == 0 {
        best.1 = accuracy(&mlp.eval(emb)?, test_ids, &targets);
    }
    Ok(ProbeOutcome {
        accuracy: best.1,
        seed: split_seed,
        resampled,
    })
}
