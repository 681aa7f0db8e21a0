//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};

use convo_encoder::corpus::{
    generate_synthetic, normalize_per_speaker, select_extremes, Conversation, Corpus, NormMode, SelectionSpec,
    SynthSpec, TurnRecord,
};
use convo_encoder::encoder::{encode_conversation, EncoderConfig, EncoderParams};
use convo_encoder::eval::{correlation_p_value, evaluate, pca2, EvalOptions, EvalReport};
use convo_encoder::numeric::{contrastive_value, finite_diff_check, GradCheckOptions, Tensor};
use convo_encoder::trainer::{batch_gradient, build_pairs, contrastive_loss, train_siamese, Pair, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_conv(id: &str, turns: usize, dim: usize, seed: u64) -> Conversation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Conversation {
        conv_id: id.into(),
        dyad_id: "d0".into(),
        score: 30.0,
        turns: (0..turns)
            .map(|j| TurnRecord {
                speaker: if j % 2 == 0 { "t" } else { "c" }.into(),
                features: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            })
            .collect(),
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let cfg = EncoderConfig {
        feat_dim: 5,
        section_size: 2,
        num_sections: 3,
        ..EncoderConfig::default()
    }
    .with_hidden(3, 2);
    let corpus = Corpus::new(5, vec![random_conv("a", 5, 5, 1), random_conv("b", 6, 5, 2)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = EncoderParams::<f64>::zeros(&cfg).map(|t| t.map(|_| rng.random_range(-0.8..0.8)));
    let flat: Vec<Tensor<f64>> = params.items().into_iter().cloned().collect();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for similar in [true, false] {
        // margin large enough that the dissimilar hinge is active
        let margin = 4.0;
        let pair = [Pair { a: 0, b: 1, similar }];
        let analytic = batch_gradient(&corpus, &pair, &cfg, &params, margin).unwrap().grads;
        let report = finite_diff_check(
            |ps: &[Tensor<f64>]| {
                let p = EncoderParams::from_items(ps.to_vec());
                let a = encode_conversation(corpus.get(0), &cfg, &p).unwrap().0;
                let b = encode_conversation(corpus.get(1), &cfg, &p).unwrap().0;
                contrastive_loss(&a.values, &b.values, similar, margin).unwrap()
            },
            &flat,
            &analytic,
            GradCheckOptions {
                max_coords: Some(300),
                ..GradCheckOptions::default()
            },
        );
        worst = worst.max(report.max_rel_err);
        checked += report.checked;
        if !report.pass {
            return outcome(false, format!("similar={similar}: {report:?}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && checked >= 400 && secs < 60.0,
        format!("max rel err {worst:.2e} over {checked} coords (2 labels), {secs:.1}s"),
    )
}

fn closed_form_loss() -> Outcome {
    let eps: f64 = 1e-12;
    let cases: [(f64, bool, f64, f64); 4] = [(0.0, true, 2.0, 0.0), (1.0, true, 2.0, 0.5), (0.0, false, 2.0, 2.0), (2.5, false, 2.0, 0.0)];
    let mut worst: f64 = 0.0;
    for (d, similar, m, want) in cases {
        worst = worst.max((contrastive_value(d, similar, m) - want).abs());
        // through embeddings the distance carries the epsilon under the root
        let l = contrastive_loss(&[0.0, 0.0], &[d, 0.0], similar, m).unwrap();
        let d_eff = (d * d + eps).sqrt();
        let expect = if similar { 0.5 * d_eff * d_eff } else { 0.5 * (m - d_eff).max(0.0).powi(2) };
        worst = worst.max((l - expect).abs());
    }
    outcome(worst <= 1e-12, format!("max abs err {worst:.1e}"))
}

fn pair_combinatorics() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for k in [1usize, 10, 15, 20, 25, 30] {
        let low: Vec<usize> = (0..k).collect();
        let high: Vec<usize> = (k..2 * k).collect();
        let p = build_pairs(&low, &high, 0).unwrap();
        let good = p.positives() == k * k - k && p.negatives() == k * k && p.len() == 2 * k * k - k;
        ok &= good;
        notes.push(format!("K={k}:{}+{}", p.positives(), p.negatives()));
        if k == 20 {
            ok &= p.len() == 780;
        }
    }
    outcome(ok, notes.join(" "))
}

fn masking_invariance() -> Outcome {
    let conv = random_conv("m", 37, 88, 5);
    let params = EncoderParams::<f64>::init(&EncoderConfig::default(), 11).unwrap();
    let exact = EncoderConfig::sections_for(4, 37);
    let mut embs = Vec::new();
    let mut weight_err: f64 = 0.0;
    let mut padded_nonzero = 0;
    for m in [exact, 200, 250] {
        let cfg = EncoderConfig {
            num_sections: m,
            ..EncoderConfig::default()
        };
        let (e, trace) = encode_conversation(&conv, &cfg, &params).unwrap();
        embs.push(e.values);
        let real_sections = 37usize.div_ceil(4);
        for (s, row) in trace.turn_weights.iter().enumerate() {
            let real_turns = if s < real_sections { (37 - 4 * s).min(4) } else { 0 };
            padded_nonzero += row[real_turns..].iter().filter(|&&w| w != 0.0).count();
            if real_turns > 0 {
                weight_err = weight_err.max((row[..real_turns].iter().sum::<f64>() - 1.0).abs());
            }
        }
        padded_nonzero += trace.section_weights[real_sections..].iter().filter(|&&w| w != 0.0).count();
        weight_err = weight_err.max((trace.section_weights[..real_sections].iter().sum::<f64>() - 1.0).abs());
    }
    let drift = embs[1..]
        .iter()
        .flat_map(|e| e.iter().zip(&embs[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    outcome(
        drift <= 1e-9 && padded_nonzero == 0 && weight_err <= 1e-12,
        format!(
            "M in {{{exact},200,250}}: max drift {drift:.1e}, nonzero padded weights {padded_nonzero}, \
             weight-sum err {weight_err:.1e}"
        ),
    )
}

fn speaker_moments(corpus: &Corpus) -> (f64, f64) {
    let dim = corpus.feat_dim();
    let mut groups: HashMap<&str, Vec<&Vec<f64>>> = HashMap::new();
    for c in corpus.conversations() {
        for t in &c.turns {
            groups.entry(&t.speaker).or_default().push(&t.features);
        }
    }
    let (mut worst_mean, mut worst_var): (f64, f64) = (0.0, 0.0);
    for rows in groups.values() {
        let n = rows.len() as f64;
        for k in 0..dim {
            let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
            worst_mean = worst_mean.max(mean.abs());
            if var > 1e-12 {
                worst_var = worst_var.max((var - 1.0).abs());
            }
        }
    }
    (worst_mean, worst_var)
}

fn normalization() -> Outcome {
    let spec = SynthSpec {
        n_conversations: 40,
        n_dyads: 10,
        conversations_per_dyad: 4,
        ..SynthSpec::default()
    };
    let raw = generate_synthetic(&spec).unwrap();
    let once = normalize_per_speaker(&raw, NormMode::Speaker);
    let twice = normalize_per_speaker(&once, NormMode::Speaker);
    let (m, v) = speaker_moments(&once);
    let idem = once
        .conversations()
        .iter()
        .zip(twice.conversations())
        .flat_map(|(a, b)| a.turns.iter().zip(&b.turns))
        .flat_map(|(a, b)| a.features.iter().zip(&b.features).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    outcome(
        m < 1e-9 && v < 1e-6 && idem <= 1e-9,
        format!("max |mean| {m:.1e}, max |var-1| {v:.1e}, idempotence {idem:.1e}"),
    )
}

fn selection() -> Outcome {
    let convs = (0..156)
        .map(|i| Conversation {
            conv_id: format!("c{i:03}"),
            dyad_id: format!("d{}", i / 4),
            score: 10.0 + i as f64 * 0.3,
            turns: vec![TurnRecord {
                speaker: "t".into(),
                features: vec![0.0],
            }],
        })
        .collect();
    let corpus = Corpus::new(1, convs).unwrap();
    let c = |r: std::ops::RangeInclusive<usize>| r.map(|i| i - 1).collect::<Vec<_>>();
    let s0 = select_extremes(&corpus, &SelectionSpec::new(20, 0)).unwrap();
    let s5 = select_extremes(&corpus, &SelectionSpec::new(20, 5)).unwrap();
    let ok = s0.low == c(1..=20)
        && s0.high == c(137..=156)
        && s0.test.len() == 96
        && s5.low == c(6..=25)
        && s5.high == c(132..=151);
    outcome(
        ok,
        format!(
            "o=0 low C{}-C{} high C{}-C{} test {}; o=5 low C{}-C{} high C{}-C{}",
            s0.low[0] + 1,
            s0.low[19] + 1,
            s0.high[0] + 1,
            s0.high[19] + 1,
            s0.test.len(),
            s5.low[0] + 1,
            s5.low[19] + 1,
            s5.high[0] + 1,
            s5.high[19] + 1
        ),
    )
}

struct PipelineRun {
    first_loss: f64,
    last_loss: f64,
    report: EvalReport,
    elapsed: Duration,
}

fn pipeline(spec: &SynthSpec, n: usize) -> PipelineRun {
    let start = Instant::now();
    let corpus = normalize_per_speaker(&generate_synthetic(spec).unwrap(), NormMode::Speaker);
    let sel = select_extremes(&corpus, &SelectionSpec::new(20, 0)).unwrap();
    let cfg = EncoderConfig {
        section_size: n,
        num_sections: 200,
        ..EncoderConfig::default()
    };
    let tc = TrainConfig {
        margin: 2.0,
        epochs: 30,
        batch_size: 64,
        lr: 0.001,
        ..TrainConfig::default()
    };
    let (ckpt, hist) = train_siamese(&corpus, &sel, &cfg, &tc).unwrap();
    let report = evaluate(&ckpt, &corpus, &sel, 20, 0, &EvalOptions::default()).unwrap();
    PipelineRun {
        first_loss: hist.epochs[0].mean_loss,
        last_loss: hist.epochs.last().unwrap().mean_loss,
        report,
        elapsed: start.elapsed(),
    }
}

fn judge_pipeline(run: &PipelineRun, label: &str) -> Outcome {
    let r = &run.report;
    let r2 = r.r2.unwrap_or(f64::NAN);
    let ok = run.last_loss < 0.5 * run.first_loss
        && r.rho_low >= 0.5
        && r.rho_high <= -0.5
        && r.p_low < 0.05
        && r.p_high < 0.05
        && r2 >= 0.3;
    outcome(
        ok,
        format!(
            "{label}: loss {:.4} -> {:.2e}; {} test convs rho_low {:.3} (p {:.1e}), rho_high {:.3} (p {:.1e}); \
             R2 {r2:.3}; MAE {:.2} +- {:.2}; {:.0}s",
            run.first_loss,
            run.last_loss,
            r.n_test,
            r.rho_low,
            r.p_low,
            r.rho_high,
            r.p_high,
            r.mae_mean,
            r.mae_sd,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn end_to_end(full: &PipelineRun) -> Outcome {
    let budget = Duration::from_secs(30 * 60);
    let verdict = judge_pipeline(full, "default SynthSpec");
    if full.elapsed <= budget {
        return verdict;
    }
    let half = pipeline(&SynthSpec::half_scale(), 4);
    let fallback = judge_pipeline(&half, "half scale (default over budget)");
    outcome(fallback.pass, format!("{} | {}", verdict.detail, fallback.detail))
}

fn sweep_sanity(n4: &PipelineRun) -> Outcome {
    let n8 = pipeline(&SynthSpec::default(), 8);
    let (a, b) = (n4.report.r2.unwrap_or(f64::NAN), n8.report.r2.unwrap_or(f64::NAN));
    outcome(a >= b, format!("R2 N=4 {a:.4} vs N=8 {b:.4}"))
}

fn run_cli(out: &Path, cfg: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["convo-encoder".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--config".into(), cfg.display().to_string(), "--out".into(), out.display().to_string()]);
    convo_encoder::cli::main_from(argv)
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let cfg_path = root.path().join("experiment.json");
    let config = serde_json::json!({
        "synth": {
            "n_conversations": 24, "n_dyads": 12, "conversations_per_dyad": 2, "feat_dim": 12,
            "signal_dims": 4, "turns_mean": 30.0, "turns_sd": 8.0, "turns_min": 12, "turns_max": 50
        },
        "selection": { "k": 5, "offset": 0 },
        "encoder": {
            "feat_dim": 12, "section_size": 4, "num_sections": 1, "turn_hidden": 8, "section_hidden": 4,
            "turn_ctx_dim": 16, "section_ctx_dim": 8, "mask_padding": true
        },
        "train": { "epochs": 3, "batch_size": 16 },
        "eval": { "num_references": 3 }
    });
    std::fs::write(&cfg_path, config.to_string()).unwrap();
    let files = ["corpus.jsonl", "manifest.json", "checkpoint.json", "history.csv", "report.json", "predictions.csv", "pca.csv"];
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = root.path().join(run);
        let corpus = out.join("corpus.jsonl");
        let corpus = corpus.to_str().unwrap();
        let codes = [
            run_cli(&out, &cfg_path, &["generate", "--seed", "7"]),
            run_cli(&out, &cfg_path, &["train", "--seed", "7", "--corpus", corpus]),
            run_cli(&out, &cfg_path, &["evaluate", "--seed", "7", "--corpus", corpus]),
        ];
        if codes != [0, 0, 0] {
            return outcome(false, format!("exit codes {codes:?}"));
        }
        outputs.push(files.map(|f| std::fs::read(out.join(f)).unwrap_or_default()));
    }
    let same: Vec<&str> = files
        .iter()
        .zip(outputs[0].iter().zip(&outputs[1]))
        .filter(|(_, (a, b))| !a.is_empty() && a == b)
        .map(|(f, _)| *f)
        .collect();
    outcome(
        same.len() == files.len(),
        format!("{}/{} artifacts byte-identical across two runs", same.len(), files.len()),
    )
}

fn statistical_kernels() -> Outcome {
    let t = StudentsT::new(0.0, 1.0, 18.0).unwrap();
    let rho: f64 = 0.45;
    let stat = rho * (18.0 / (1.0 - rho * rho)).sqrt();
    let oracle = 2.0 * t.cdf(-stat);
    let p = correlation_p_value(rho, 20);
    let p_err = (p - oracle).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pts: Vec<Vec<f64>> = (0..80)
        .map(|_| {
            let z: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            z.iter().enumerate().map(|(j, v)| v * (1.0 + 3.0 / (1.0 + j as f64))).collect()
        })
        .collect();
    let pca = pca2(&pts).unwrap();
    // oracle: eigenvalues of the explicitly formed covariance
    let n = pts.len() as f64;
    let mean: Vec<f64> = (0..32).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let cov = nalgebra::DMatrix::from_fn(32, 32, |a, b| {
        pts.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / (n - 1.0)
    });
    let mut eig: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let mut var_err: f64 = 0.0;
    for k in 0..2 {
        let col: Vec<f64> = pca.coords.iter().map(|c| c[k]).collect();
        let m = col.iter().sum::<f64>() / n;
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        var_err = var_err.max((v - eig[k]).abs());
    }
    outcome(
        p_err < 1e-3 && var_err < 1e-8,
        format!("p(n=20, rho=0.45) = {p:.5} vs t-CDF {oracle:.5}; PCA variance err {var_err:.1e}"),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 gradient correctness", gradient_correctness()),
        ("2 closed-form loss table", closed_form_loss()),
        ("3 pair combinatorics", pair_combinatorics()),
        ("4 masking invariance", masking_invariance()),
        ("5 normalization", normalization()),
        ("6 selection replication", selection()),
    ];
    let full = pipeline(&SynthSpec::default(), 4);
    results.push(("7 end-to-end synthetic oracle", end_to_end(&full)));
    results.push(("8 sweep sanity N=4 vs N=8", sweep_sanity(&full)));
    results.push(("9 determinism", determinism()));
    results.push(("10 statistical kernels", statistical_kernels()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} [{name}] {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
