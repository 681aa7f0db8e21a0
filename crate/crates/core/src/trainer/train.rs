use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::Checkpoint;
use super::pairs::{build_pairs, Pair, PairSet};
use crate::corpus::{Corpus, Selection};
use crate::encoder::{EncoderConfig, EncoderParams, EncodingPass};
use crate::error::{Error, Result};
use crate::numeric::{Tape, Tensor};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub margin: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 2.0,
            batch_size: 64,
            epochs: 30,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config("margin must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn steps_per_epoch(&self, pairs: usize) -> usize {
        pairs.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_pos_dist: f64,
    pub mean_neg_dist: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,mean_pos_dist,mean_neg_dist\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:?},{:?},{:?}\n",
                e.epoch, e.mean_loss, e.mean_pos_dist, e.mean_neg_dist
            ));
        }
        out
    }
}

/// Loss and parameter gradient of one batch, both averaged over its pairs.
#[derive(Debug, Clone)]
pub struct BatchResult<T> {
    pub loss: T,
    pub pair_losses: Vec<T>,
    pub pair_distances: Vec<T>,
    /// Canonical parameter order.
    pub grads: Vec<Tensor<T>>,
}

/// Encodes every conversation the batch touches once with the shared
/// parameters, evaluates the mean contrastive loss over the pairs, and
/// back-propagates each embedding's share of the gradient through its
/// conversation. Accumulation runs in ascending corpus-index order.
pub fn batch_gradient<T: Scalar>(
    corpus: &Corpus,
    batch: &[Pair],
    enc_cfg: &EncoderConfig,
    params: &EncoderParams<T>,
    margin: T,
) -> Result<BatchResult<T>> {
    if batch.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut slots: BTreeMap<usize, usize> = BTreeMap::new();
    for p in batch {
        for i in [p.a, p.b] {
            if i >= corpus.len() {
                return Err(Error::UnknownId(format!("corpus index {i}")));
            }
            let next = slots.len();
            slots.entry(i).or_insert(next);
        }
    }
    // BTreeMap iteration is ascending in corpus index; renumber slots to match.
    let members: Vec<usize> = slots.keys().copied().collect();
    for (slot, idx) in members.iter().enumerate() {
        slots.insert(*idx, slot);
    }

    let passes: Vec<EncodingPass<T>> = members
        .par_iter()
        .map(|&i| EncodingPass::run(corpus.get(i), enc_cfg, params))
        .collect::<Result<_>>()?;

    let mut head = Tape::new();
    let leaves: Vec<_> = passes
        .iter()
        .map(|p| head.leaf(Tensor::vector(p.embedding().to_vec())))
        .collect();
    let mut losses = Vec::with_capacity(batch.len());
    let mut dists = Vec::with_capacity(batch.len());
    for p in batch {
        let d = head.euclidean_distance(leaves[slots[&p.a]], leaves[slots[&p.b]])?;
        dists.push(d);
        losses.push(head.contrastive(d, p.similar, margin)?);
    }
    let total = head.mean(&losses)?;
    let head_grads = head.backward(total, &[T::one()])?;

    let per_conv: Vec<Vec<Tensor<T>>> = passes
        .par_iter()
        .zip(leaves.par_iter())
        .map(|(pass, &leaf)| match head_grads.get(leaf) {
            Some(seed) => pass.param_gradients(seed),
            None => Ok(params.items().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect()),
        })
        .collect::<Result<_>>()?;

    let mut grads: Vec<Tensor<T>> = params.items().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
    for conv_grads in per_conv {
        for (acc, g) in grads.iter_mut().zip(conv_grads) {
            for (a, &x) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += x;
            }
        }
    }
    Ok(BatchResult {
        loss: head.value(total).as_slice()[0],
        pair_losses: losses.iter().map(|&l| head.value(l).as_slice()[0]).collect(),
        pair_distances: dists.iter().map(|&d| head.value(d).as_slice()[0]).collect(),
        grads,
    })
}

/// Trains `params` on a fixed pair set. Pairs are reshuffled every epoch with
/// a seed derived from `(train_cfg.seed, epoch)`; a trailing partial batch is
/// kept.
pub fn train_pairs<T: Scalar>(
    corpus: &Corpus,
    pairs: &PairSet,
    enc_cfg: &EncoderConfig,
    train_cfg: &TrainConfig,
    mut params: EncoderParams<T>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(EncoderParams<T>, TrainHistory)> {
    train_cfg.validate()?;
    enc_cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let margin = T::from_f64_lossy(train_cfg.margin);
    let adam = train_cfg.adam();
    let mut state = AdamState::new(params.items());
    let mut history = TrainHistory::default();

    for epoch in 0..train_cfg.epochs {
        let mut order = pairs.pairs.clone();
        let epoch_seed = seed::derive(train_cfg.seed, seed::STREAM_EPOCH_BASE + epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));

        let (mut loss_sum, mut pos_sum, mut neg_sum) = (0.0, 0.0, 0.0);
        let (mut n_pos, mut n_neg) = (0usize, 0usize);
        for batch in order.chunks(train_cfg.batch_size) {
            let res = batch_gradient(corpus, batch, enc_cfg, &params, margin)?;
            for ((p, l), d) in batch.iter().zip(&res.pair_losses).zip(&res.pair_distances) {
                loss_sum += l.to_f64_lossy();
                if p.similar {
                    pos_sum += d.to_f64_lossy();
                    n_pos += 1;
                } else {
                    neg_sum += d.to_f64_lossy();
                    n_neg += 1;
                }
            }
            let mut targets = params.items_mut();
            adam_step(&mut targets, &res.grads, &mut state, &adam)?;
            history.steps += 1;
        }
        let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
        let stats = EpochStats {
            epoch: epoch + 1,
            mean_loss: loss_sum / order.len() as f64,
            mean_pos_dist: mean(pos_sum, n_pos),
            mean_neg_dist: mean(neg_sum, n_neg),
        };
        log::info!(
            "epoch {:>3}: loss {:.5}  pos {:.4}  neg {:.4}",
            stats.epoch,
            stats.mean_loss,
            stats.mean_pos_dist,
            stats.mean_neg_dist
        );
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok((params, history))
}

/// Full Siamese training run on a selection of the corpus. Initial weights,
/// pair order and epoch shuffles all derive from `train_cfg.seed`.
pub fn train_siamese(
    corpus: &Corpus,
    selection: &Selection,
    enc_cfg: &EncoderConfig,
    train_cfg: &TrainConfig,
) -> Result<(Checkpoint, TrainHistory)> {
    enc_cfg.validate()?;
    if enc_cfg.feat_dim != corpus.feat_dim() {
        return Err(Error::Config(format!(
            "encoder feat_dim {} does not match corpus feat_dim {}",
            enc_cfg.feat_dim,
            corpus.feat_dim()
        )));
    }
    let pairs = build_pairs(
        &selection.low,
        &selection.high,
        seed::derive(train_cfg.seed, seed::STREAM_PAIRS),
    )?;
    let init = EncoderParams::<f64>::init(enc_cfg, seed::derive(train_cfg.seed, seed::STREAM_INIT))?;
    let (params, history) = train_pairs(corpus, &pairs, enc_cfg, train_cfg, init, |_| {})?;
    Ok((
        Checkpoint {
            encoder_config: *enc_cfg,
            train_config: Some(*train_cfg),
            params,
        },
        history,
    ))
}
