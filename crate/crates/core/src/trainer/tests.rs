use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{generate_synthetic, select_extremes, Conversation, Corpus, SelectionSpec, SynthSpec, TurnRecord};
use crate::encoder::{encode_conversation, encode_grid, section_conversation, EncoderConfig, EncoderParams};
use crate::numeric::{Tape, Tensor};

fn random_conv(id: &str, score: f64, turns: usize, dim: usize, seed: u64) -> Conversation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Conversation {
        conv_id: id.into(),
        dyad_id: format!("dyad_{id}"),
        score,
        turns: (0..turns)
            .map(|j| TurnRecord {
                speaker: if j % 2 == 0 { "t" } else { "c" }.into(),
                features: (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect(),
            })
            .collect(),
    }
}

fn small_cfg() -> EncoderConfig {
    EncoderConfig {
        feat_dim: 5,
        section_size: 2,
        num_sections: 4,
        ..EncoderConfig::default()
    }
    .with_hidden(4, 4)
}

fn toy_corpus(n: usize) -> Corpus {
    let convs = (0..n)
        .map(|i| random_conv(&format!("c{i}"), i as f64, 3 + i % 5, 5, i as u64))
        .collect();
    Corpus::new(5, convs).unwrap()
}

fn max_abs_diff(a: &[Tensor<f64>], b: &[Tensor<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn zero_epochs_returns_init() {
    let corpus = toy_corpus(4);
    let cfg = small_cfg();
    let init = EncoderParams::<f64>::init(&cfg, 5).unwrap();
    let pairs = build_pairs(&[0, 1], &[2, 3], 0).unwrap();
    let tc = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let (out, hist) = train_pairs(&corpus, &pairs, &cfg, &tc, init.clone(), |_| {}).unwrap();
    assert_eq!(out, init);
    assert!(hist.epochs.is_empty());
    assert_eq!(hist.steps, 0);
}

#[test]
fn single_negative_pair_is_pushed_past_the_margin() {
    let corpus = toy_corpus(2);
    let cfg = small_cfg();
    let init = EncoderParams::<f64>::init(&cfg, 1).unwrap();
    let pairs = build_pairs(&[0], &[1], 0).unwrap();
    assert_eq!(pairs.len(), 1);
    let tc = TrainConfig {
        epochs: 200,
        batch_size: 1,
        lr: 0.01,
        ..TrainConfig::default()
    };
    let (params, hist) = train_pairs(&corpus, &pairs, &cfg, &tc, init, |_| {}).unwrap();
    assert_eq!(hist.steps, 200);
    let a = encode_conversation(corpus.get(0), &cfg, &params).unwrap().0;
    let b = encode_conversation(corpus.get(1), &cfg, &params).unwrap().0;
    let d = crate::numeric::distance(&a.values, &b.values);
    assert!(d >= tc.margin - 0.1, "final distance {d}");
}

#[test]
fn identical_inputs_share_weights() {
    let corpus = toy_corpus(3);
    let cfg = small_cfg();
    let p = EncoderParams::<f64>::init(&cfg, 2).unwrap();
    let batch = [Pair { a: 1, b: 1, similar: true }];
    let res = batch_gradient(&corpus, &batch, &cfg, &p, 2.0).unwrap();
    assert!(res.pair_distances[0] <= 1e-6);
}

#[test]
fn batch_loss_is_mean_of_pair_losses() {
    let corpus = toy_corpus(6);
    let cfg = small_cfg();
    let p = EncoderParams::<f64>::init(&cfg, 3).unwrap();
    let pairs = build_pairs(&[0, 1, 2], &[3, 4, 5], 9).unwrap();
    let res = batch_gradient(&corpus, &pairs.pairs, &cfg, &p, 2.0).unwrap();
    let mean = res.pair_losses.iter().sum::<f64>() / res.pair_losses.len() as f64;
    assert!((res.loss - mean).abs() <= 1e-10);
    for (pair, &l) in pairs.pairs.iter().zip(&res.pair_losses) {
        let a = encode_conversation(corpus.get(pair.a), &cfg, &p).unwrap().0;
        let b = encode_conversation(corpus.get(pair.b), &cfg, &p).unwrap().0;
        let direct = contrastive_loss(&a.values, &b.values, pair.similar, 2.0).unwrap();
        assert!((direct - l).abs() <= 1e-12);
    }
}

#[test]
fn swapping_pair_members_changes_nothing() {
    let corpus = toy_corpus(6);
    let cfg = small_cfg();
    let p = EncoderParams::<f64>::init(&cfg, 4).unwrap();
    let pairs = build_pairs(&[0, 1, 2], &[3, 4, 5], 1).unwrap();
    let swapped: Vec<Pair> = pairs.pairs.iter().map(|p| p.swapped()).collect();
    let a = batch_gradient(&corpus, &pairs.pairs, &cfg, &p, 2.0).unwrap();
    let b = batch_gradient(&corpus, &swapped, &cfg, &p, 2.0).unwrap();
    assert!((a.loss - b.loss).abs() <= 1e-10);
    assert!(max_abs_diff(&a.grads, &b.grads) <= 1e-10);
}

/// The per-conversation split of the batch gradient must agree with one tape
/// holding every branch of every pair.
#[test]
fn split_batch_gradient_matches_single_tape() {
    let corpus = toy_corpus(5);
    let cfg = small_cfg();
    let p = EncoderParams::<f64>::init(&cfg, 6).unwrap();
    let batch = [
        Pair { a: 0, b: 3, similar: false },
        Pair { a: 0, b: 1, similar: true },
        Pair { a: 4, b: 3, similar: true },
        Pair { a: 2, b: 4, similar: false },
    ];
    let split = batch_gradient(&corpus, &batch, &cfg, &p, 2.0).unwrap();

    let mut t = Tape::new();
    let vars = p.record(&mut t);
    let mut losses = Vec::new();
    for pair in &batch {
        let ga = section_conversation::<f64>(corpus.get(pair.a), &cfg).unwrap();
        let gb = section_conversation::<f64>(corpus.get(pair.b), &cfg).unwrap();
        let xa = encode_grid(&mut t, &vars, &ga, &cfg).unwrap().embedding;
        let xb = encode_grid(&mut t, &vars, &gb, &cfg).unwrap().embedding;
        let d = t.euclidean_distance(xa, xb).unwrap();
        losses.push(t.contrastive(d, pair.similar, 2.0).unwrap());
    }
    let l = t.mean(&losses).unwrap();
    let items: Vec<_> = vars.items().into_iter().copied().collect();
    let direct = t.gradient_of(l, &items).unwrap();
    assert!((t.value(l).as_slice()[0] - split.loss).abs() <= 1e-12);
    assert!(max_abs_diff(&direct, &split.grads) <= 1e-12);
}

#[test]
fn step_count_and_determinism() {
    let corpus = toy_corpus(8);
    let cfg = small_cfg();
    let pairs = build_pairs(&[0, 1, 2], &[5, 6, 7], 0).unwrap();
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 17,
        ..TrainConfig::default()
    };
    let init = EncoderParams::<f64>::init(&cfg, 8).unwrap();
    let (pa, ha) = train_pairs(&corpus, &pairs, &cfg, &tc, init.clone(), |_| {}).unwrap();
    let (pb, hb) = train_pairs(&corpus, &pairs, &cfg, &tc, init, |_| {}).unwrap();
    // 15 pairs at batch 4 -> 4 steps per epoch, last batch partial
    assert_eq!(ha.steps, 12);
    assert_eq!(tc.steps_per_epoch(pairs.len()), 4);
    assert_eq!(ha.epochs.len(), 3);
    assert_eq!(ha.to_csv(), hb.to_csv());
    assert_eq!(pa, pb);
}

#[test]
fn empty_pairs_and_bad_config() {
    let corpus = toy_corpus(2);
    let cfg = small_cfg();
    let init = EncoderParams::<f64>::init(&cfg, 0).unwrap();
    let tc = TrainConfig::default();
    assert!(train_pairs(&corpus, &PairSet::default(), &cfg, &tc, init.clone(), |_| {}).is_err());
    let pairs = build_pairs(&[0], &[1], 0).unwrap();
    let bad = TrainConfig { margin: 0.0, ..tc };
    assert!(train_pairs(&corpus, &pairs, &cfg, &bad, init, |_| {}).is_err());
}

#[test]
fn training_reduces_loss_on_planted_signal() {
    let spec = SynthSpec {
        n_conversations: 24,
        n_dyads: 12,
        conversations_per_dyad: 2,
        feat_dim: 10,
        signal_dims: 4,
        signal_scale: 1.5,
        turns_mean: 20.0,
        turns_sd: 6.0,
        turns_min: 8,
        turns_max: 40,
        seed: 3,
        ..SynthSpec::default()
    };
    let corpus = crate::corpus::normalize_per_speaker(&generate_synthetic(&spec).unwrap(), Default::default());
    let sel = select_extremes(&corpus, &SelectionSpec::new(5, 0)).unwrap();
    let cfg = EncoderConfig {
        feat_dim: 10,
        section_size: 4,
        num_sections: 10,
        ..EncoderConfig::default()
    }
    .with_hidden(6, 4);
    let tc = TrainConfig {
        epochs: 15,
        batch_size: 16,
        lr: 0.005,
        seed: 2,
        ..TrainConfig::default()
    };
    let (ckpt, hist) = train_siamese(&corpus, &sel, &cfg, &tc).unwrap();
    assert!(ckpt.params.is_finite());
    let first = hist.epochs.first().unwrap().mean_loss;
    let last = hist.epochs.last().unwrap().mean_loss;
    assert!(last < first, "{first} -> {last}");
    let (ckpt2, hist2) = train_siamese(&corpus, &sel, &cfg, &tc).unwrap();
    assert_eq!(hist, hist2);
    assert_eq!(ckpt, ckpt2);
}
