use std::path::Path;
use std::process::Command;

use convo_encoder::cli::main_from;
use convo_encoder::eval::EvalReport;

const CONFIG: &str = r#"{
    "synth": {
        "n_conversations": 24, "n_dyads": 12, "conversations_per_dyad": 2, "feat_dim": 10,
        "signal_dims": 4, "turns_mean": 24.0, "turns_sd": 6.0, "turns_min": 10, "turns_max": 40
    },
    "selection": { "k": 5, "offset": 0 },
    "encoder": {
        "feat_dim": 10, "section_size": 4, "num_sections": 1, "turn_hidden": 6, "section_hidden": 4,
        "turn_ctx_dim": 12, "section_ctx_dim": 8, "mask_padding": true
    },
    "train": { "epochs": 2, "batch_size": 16 },
    "eval": { "num_references": 3 }
}"#;

fn run(dir: &Path, args: &[&str]) -> i32 {
    let cfg = dir.join("experiment.json");
    if !cfg.exists() {
        std::fs::write(&cfg, CONFIG).unwrap();
    }
    let mut argv: Vec<String> = vec!["convo-encoder".into()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--config".into());
    argv.push(cfg.display().to_string());
    main_from(argv)
}

#[test]
fn train_evaluate_embed_visualize() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = d.join("run");
    let out_s = out.to_str().unwrap();
    let corpus = d.join("data/corpus.jsonl");
    let corpus_s = corpus.to_str().unwrap();
    assert_eq!(run(d, &["generate", "--out", d.join("data").to_str().unwrap()]), 0);
    assert!(corpus.exists() && d.join("data/manifest.json").exists());

    assert_eq!(run(d, &["train", "--corpus", corpus_s, "--out", out_s, "--k", "5", "--n", "4"]), 0);
    for f in ["checkpoint.json", "history.csv", "train.config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let hist = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(hist.lines().next().unwrap(), "epoch,mean_loss,mean_pos_dist,mean_neg_dist");
    assert_eq!(hist.lines().count(), 3);

    assert_eq!(run(d, &["evaluate", "--corpus", corpus_s, "--out", out_s]), 0);
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!((-1.0..=1.0).contains(&report.rho_low) && (0.0..=1.0).contains(&report.p_high));
    assert!(report.r2.is_none_or(|r| r <= 1.0));
    assert_eq!(report.predictions.len(), report.n_test);

    assert_eq!(run(d, &["embed", "--corpus", corpus_s, "--out", out_s]), 0);
    let emb = std::fs::read_to_string(out.join("embeddings.csv")).unwrap();
    assert_eq!(emb.lines().count(), 25);
    assert_eq!(emb.lines().next().unwrap().split(',').count(), 1 + 8);

    assert_eq!(run(d, &["visualize", "--out", out_s]), 0);
    let svg = std::fs::read_to_string(out.join("pca.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains(r#"class="low""#) && svg.contains(r#"class="test""#));
    assert!(std::fs::read_to_string(out.join("abs_diff_hist.svg")).unwrap().contains(r#"class="bin""#));

    // the snapshot alone reproduces the run
    let again = d.join("again");
    let snap = out.join("train.config.json");
    let code = main_from([
        "convo-encoder",
        "train",
        "--config",
        snap.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read(out.join("checkpoint.json")).unwrap(),
        std::fs::read(again.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn sweep_writes_a_summary_row_per_setting() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = d.join("sweep");
    assert_eq!(run(d, &["sweep", "--out", out.to_str().unwrap(), "--k", "3,5", "--n", "2,4", "--epochs", "1"]), 0);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,offset,n,rho_low,p_low,rho_high,p_high,r2,mae_mean,mae_sd"
    );
    assert_eq!(lines.count(), 4);
    assert!(out.join("k3_o0_n2/report.json").exists());
    // every run shares one test block
    let a: EvalReport = serde_json::from_str(&std::fs::read_to_string(out.join("k3_o0_n2/report.json")).unwrap()).unwrap();
    let b: EvalReport = serde_json::from_str(&std::fs::read_to_string(out.join("k5_o0_n4/report.json")).unwrap()).unwrap();
    assert_eq!(a.n_test, b.n_test);
}

#[test]
fn binary_exit_codes_and_error_json() {
    let exe = env!("CARGO_BIN_EXE_convo-encoder");
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.jsonl");
    let o = Command::new(exe)
        .args(["evaluate", "--error-json", "--corpus", missing.to_str().unwrap(), "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let line = String::from_utf8_lossy(&o.stderr);
    let last = line.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(last).unwrap();
    assert!(v["error"].is_string() && v["message"].is_string());

    let o = Command::new(exe).args(["train", "--no-such-flag"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(exe).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("sweep"));
}
