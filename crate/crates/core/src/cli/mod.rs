//! Command-line front end: corpus generation, training, embedding,
//! evaluation, parameter sweeps and SVG figures.

mod config;
mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

pub use config::ExperimentConfig;
pub use svg::{error_histogram, pca_scatter};

use crate::corpus::{generate_synthetic, load_corpus, select_extremes, Corpus, NormMode, SelectionSpec, SynthSpec};
use crate::error::Result;
use crate::eval::{csv_err, embed_corpus, evaluate, finish_csv, EvalReport};
use crate::fsutil;
use crate::trainer::{train_siamese, Checkpoint};

#[derive(Debug, Parser)]
#[command(name = "convo-encoder", version, about = "Siamese hierarchical-attention conversation encoder")]
pub struct Cli {
    /// On failure, print a JSON object with the error to stderr.
    #[arg(long, global = true)]
    pub error_json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus and its manifest.
    Generate(GenerateArgs),
    /// Train the encoder on the polarized low/high groups.
    Train(TrainArgs),
    /// Write one embedding per conversation.
    Embed(EmbedArgs),
    /// Reference-distance correlations, leave-one-dyad-out regression, PCA.
    Evaluate(EvaluateArgs),
    /// Train and evaluate over lists of K, offset and N.
    Sweep(SweepArgs),
    /// SVG figures from an evaluation report.
    Visualize(VisualizeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    None,
    Speaker,
    SpeakerPerConversation,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Corpus JSONL; a synthetic corpus is generated when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Feature normalization applied before encoding.
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    #[command(flatten)]
    pub synth: SynthArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// 78 conversations with turn counts halved.
    #[arg(long)]
    pub half_scale: bool,
    #[arg(long)]
    pub signal_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Sections per conversation; defaults to fit the longest conversation.
    #[arg(long)]
    pub m_sections: Option<usize>,
    #[arg(long, value_name = "BOOL")]
    pub mask_padding: Option<bool>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RegressorArgs {
    #[arg(long)]
    pub regressor_lambda: Option<f64>,
    #[arg(long)]
    pub regressor_gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub synth: SynthArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub offset: Option<usize>,
    /// Turns per section.
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Defaults to `<out>/checkpoint.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Defaults to `<out>/checkpoint.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub offset: Option<usize>,
    #[command(flatten)]
    pub regressor: RegressorArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated group sizes.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub offset: Vec<usize>,
    /// Comma-separated turns-per-section values.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub regressor: RegressorArgs,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Defaults to `<out>/report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn base_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.out, common.out.clone());
    set(&mut cfg.seed, common.seed);
    Ok(cfg)
}

fn apply_synth(cfg: &mut ExperimentConfig, a: &SynthArgs) {
    if a.half_scale {
        let seed = cfg.synth.seed;
        cfg.synth = SynthSpec { seed, ..SynthSpec::half_scale() };
    }
    set(&mut cfg.synth.signal_scale, a.signal_scale);
}

fn apply_data(cfg: &mut ExperimentConfig, a: &DataArgs) {
    if a.corpus.is_some() {
        cfg.corpus = a.corpus.clone();
    }
    if let Some(n) = a.norm {
        cfg.normalization = match n {
            NormArg::None => None,
            NormArg::Speaker => Some(NormMode::Speaker),
            NormArg::SpeakerPerConversation => Some(NormMode::SpeakerPerConversation),
        };
    }
    apply_synth(cfg, &a.synth);
}

fn apply_model(cfg: &mut ExperimentConfig, a: &ModelArgs) {
    if a.m_sections.is_some() {
        cfg.m_sections = a.m_sections;
    }
    set(&mut cfg.encoder.mask_padding, a.mask_padding);
    set(&mut cfg.train.margin, a.margin);
    set(&mut cfg.train.epochs, a.epochs);
    set(&mut cfg.train.batch_size, a.batch);
    set(&mut cfg.train.lr, a.lr);
}

fn apply_regressor(cfg: &mut ExperimentConfig, a: &RegressorArgs) {
    set(&mut cfg.eval.regressor.lambda, a.regressor_lambda);
    if a.regressor_gamma.is_some() {
        cfg.eval.regressor.gamma = a.regressor_gamma;
    }
}

fn finalize(mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
    cfg.resolve_seeds();
    cfg.validate()?;
    Ok(cfg)
}

/// Loaded (or generated) corpus after normalization.
fn input_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    let raw = match &cfg.corpus {
        Some(p) => load_corpus(p)?,
        None => {
            info!("no corpus given, generating synthetic corpus (seed {})", cfg.synth.seed);
            generate_synthetic(&cfg.synth)?
        }
    };
    Ok(cfg.prepare(&raw))
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fsutil::write_atomic(&path, text.as_bytes())?;
    info!("wrote {}", path.display());
    written.push(path);
    Ok(())
}

fn train_one(cfg: &ExperimentConfig, corpus: &Corpus, dir: &Path, written: &mut Vec<PathBuf>) -> Result<Checkpoint> {
    let enc = cfg.encoder_for(corpus)?;
    let sel = select_extremes(corpus, &cfg.selection)?;
    info!(
        "training K={} offset={} N={} M={} on {} conversations",
        cfg.selection.k, cfg.selection.offset, enc.section_size, enc.num_sections,
        corpus.len()
    );
    let (ckpt, history) = train_siamese(corpus, &sel, &enc, &cfg.train)?;
    write(dir.join("checkpoint.json"), &ckpt.to_json()?, written)?;
    write(dir.join("history.csv"), &history.to_csv(), written)?;
    Ok(ckpt)
}

fn evaluate_one(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    ckpt: &Checkpoint,
    dir: &Path,
    written: &mut Vec<PathBuf>,
) -> Result<EvalReport> {
    let sel = select_extremes(corpus, &cfg.selection)?;
    let report = evaluate(ckpt, corpus, &sel, cfg.selection.k, cfg.selection.offset, &cfg.eval)?;
    write(dir.join("report.json"), &report.to_json()?, written)?;
    write(dir.join("predictions.csv"), &report.predictions_csv()?, written)?;
    write(dir.join("pca.csv"), &report.pca_csv()?, written)?;
    Ok(report)
}

pub const SUMMARY_HEADER: [&str; 10] =
    ["k", "offset", "n", "rho_low", "p_low", "rho_high", "p_high", "r2", "mae_mean", "mae_sd"];

fn summary_row(n: usize, r: &EvalReport) -> [String; 10] {
    [
        r.k.to_string(),
        r.offset.to_string(),
        n.to_string(),
        r.rho_low.to_string(),
        r.p_low.to_string(),
        r.rho_high.to_string(),
        r.p_high.to_string(),
        r.r2.map_or_else(|| "NA".to_string(), |v| v.to_string()),
        r.mae_mean.to_string(),
        r.mae_sd.to_string(),
    ]
}

/// Runs one command and returns the files it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match cli.command {
        Command::Generate(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_synth(&mut cfg, &a.synth);
            let cfg = finalize(cfg)?;
            let corpus = generate_synthetic(&cfg.synth)?;
            let path = cfg.out.join("corpus.jsonl");
            corpus.save(&path, Some(cfg.synth.clone()))?;
            written.push(path.clone());
            written.push(crate::corpus::manifest_path(&path));
            written.push(cfg.write_snapshot("generate")?);
        }
        Command::Train(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_data(&mut cfg, &a.data);
            set(&mut cfg.selection.k, a.k);
            set(&mut cfg.selection.offset, a.offset);
            set(&mut cfg.encoder.section_size, a.n);
            apply_model(&mut cfg, &a.model);
            let cfg = finalize(cfg)?;
            let corpus = input_corpus(&cfg)?;
            train_one(&cfg, &corpus, &cfg.out, &mut written)?;
            written.push(cfg.write_snapshot("train")?);
        }
        Command::Embed(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_data(&mut cfg, &a.data);
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint.clone();
            }
            let cfg = finalize(cfg)?;
            let ckpt = Checkpoint::load(&cfg.checkpoint_path())?;
            let corpus = input_corpus(&cfg)?;
            let emb = embed_corpus(&corpus, &ckpt.encoder_config, &ckpt.params)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let dim = ckpt.encoder_config.embedding_dim();
            let header: Vec<String> =
                std::iter::once("conv_id".to_string()).chain((0..dim).map(|j| format!("e{j}"))).collect();
            w.write_record(&header).map_err(csv_err)?;
            for (c, e) in corpus.conversations().iter().zip(&emb) {
                let row: Vec<String> = std::iter::once(c.conv_id.clone()).chain(e.iter().map(f64::to_string)).collect();
                w.write_record(&row).map_err(csv_err)?;
            }
            write(cfg.out.join("embeddings.csv"), &finish_csv(w)?, &mut written)?;
            written.push(cfg.write_snapshot("embed")?);
        }
        Command::Evaluate(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_data(&mut cfg, &a.data);
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint.clone();
            }
            set(&mut cfg.selection.k, a.k);
            set(&mut cfg.selection.offset, a.offset);
            apply_regressor(&mut cfg, &a.regressor);
            let cfg = finalize(cfg)?;
            let ckpt = Checkpoint::load(&cfg.checkpoint_path())?;
            let corpus = input_corpus(&cfg)?;
            let r = evaluate_one(&cfg, &corpus, &ckpt, &cfg.out, &mut written)?;
            info!(
                "rho_low {:.3} (p {:.3e}), rho_high {:.3} (p {:.3e}), R2 {:?}, MAE {:.3} +- {:.3}",
                r.rho_low, r.p_low, r.rho_high, r.p_high, r.r2, r.mae_mean, r.mae_sd
            );
            written.push(cfg.write_snapshot("evaluate")?);
        }
        Command::Sweep(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_data(&mut cfg, &a.data);
            apply_model(&mut cfg, &a.model);
            apply_regressor(&mut cfg, &a.regressor);
            let cfg = finalize(cfg)?;
            let or_default = |v: &[usize], d: usize| if v.is_empty() { vec![d] } else { v.to_vec() };
            let ks = or_default(&a.k, cfg.selection.k);
            let offsets = or_default(&a.offset, cfg.selection.offset);
            let ns = or_default(&a.n, cfg.encoder.section_size);
            let corpus = input_corpus(&cfg)?;
            // one shared test block across the sweep, trimmed at the widest reach
            let widest = ks.iter().max().unwrap_or(&0) + offsets.iter().max().unwrap_or(&0);
            let test_exclude = cfg
                .selection
                .test_exclude
                .or_else(|| Some(SelectionSpec::new(widest, 0).test_exclusion(corpus.len())));
            let mut summary = csv::Writer::from_writer(Vec::new());
            summary.write_record(SUMMARY_HEADER).map_err(csv_err)?;
            for &n in &ns {
                for &k in &ks {
                    for &offset in &offsets {
                        let mut run_cfg = cfg.clone();
                        run_cfg.selection = SelectionSpec { k, offset, test_exclude };
                        run_cfg.encoder.section_size = n;
                        let dir = cfg.out.join(format!("k{k}_o{offset}_n{n}"));
                        run_cfg.out = dir.clone();
                        let ckpt = train_one(&run_cfg, &corpus, &dir, &mut written)?;
                        let r = evaluate_one(&run_cfg, &corpus, &ckpt, &dir, &mut written)?;
                        written.push(run_cfg.write_snapshot("sweep")?);
                        summary.write_record(summary_row(n, &r)).map_err(csv_err)?;
                    }
                }
            }
            write(cfg.out.join("summary.csv"), &finish_csv(summary)?, &mut written)?;
            written.push(cfg.write_snapshot("sweep")?);
        }
        Command::Visualize(a) => {
            let mut cfg = base_config(&a.common)?;
            if a.report.is_some() {
                cfg.report = a.report.clone();
            }
            let cfg = finalize(cfg)?;
            let report: EvalReport = serde_json::from_str(&fsutil::read_to_string(&cfg.report_path())?)?;
            write(cfg.out.join("pca.svg"), &pca_scatter(&report), &mut written)?;
            write(cfg.out.join("abs_diff_hist.svg"), &error_histogram(&report), &mut written)?;
            written.push(cfg.write_snapshot("visualize")?);
        }
    }
    Ok(written)
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Parses `args`, runs the command and maps the outcome to an exit code:
/// 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let want_json = args.iter().any(|a| a == "--error-json");
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            if want_json {
                eprintln!("{}", error_json("usage", &e.to_string()));
            } else {
                let _ = e.print();
            }
            return 2;
        }
    };
    let json = cli.error_json;
    match run(cli) {
        Ok(_) => 0,
        Err(e) => {
            if json {
                eprintln!("{}", error_json(e.kind(), &e.to_string()));
            } else {
                eprintln!("error: {e}");
            }
            1
        }
    }
}
