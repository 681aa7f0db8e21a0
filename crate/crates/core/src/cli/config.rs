use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_per_speaker, Corpus, NormMode, SelectionSpec, SynthSpec};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::fsutil;
use crate::seed;
use crate::trainer::TrainConfig;

/// Everything a run depends on. Loaded from an optional JSON file, then
/// overridden by command-line flags, then written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Root seed; the corpus, initial weights and pair shuffles derive from it.
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    /// Defaults to `<out>/checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    /// Defaults to `<out>/report.json`.
    pub report: Option<PathBuf>,
    pub out: PathBuf,
    pub synth: SynthSpec,
    pub selection: SelectionSpec,
    pub encoder: EncoderConfig,
    /// Sections per conversation; `None` sizes M to the longest conversation.
    pub m_sections: Option<usize>,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    /// `None` feeds raw features to the encoder.
    pub normalization: Option<NormMode>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: None,
            checkpoint: None,
            report: None,
            out: PathBuf::from("out"),
            synth: SynthSpec::default(),
            selection: SelectionSpec::default(),
            encoder: EncoderConfig::default(),
            m_sections: None,
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            normalization: Some(NormMode::Speaker),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fsutil::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Pushes the root seed into the streams that consume it.
    pub fn resolve_seeds(&mut self) {
        self.synth.seed = seed::derive(self.seed, seed::STREAM_CORPUS);
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.eval.regressor.validate()?;
        if self.eval.num_references == 0 {
            return Err(Error::Config("num_references must be positive".into()));
        }
        if self.m_sections == Some(0) {
            return Err(Error::Config("m_sections must be positive".into()));
        }
        Ok(())
    }

    /// Encoder shape for `corpus`: feature width from the data, M from the
    /// override or the longest conversation.
    pub fn encoder_for(&self, corpus: &Corpus) -> Result<EncoderConfig> {
        let mut cfg = self.encoder;
        cfg.feat_dim = corpus.feat_dim();
        cfg.num_sections = self
            .m_sections
            .unwrap_or_else(|| EncoderConfig::sections_for(cfg.section_size.max(1), corpus.max_turns()));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn prepare(&self, corpus: &Corpus) -> Corpus {
        match self.normalization {
            Some(mode) => normalize_per_speaker(corpus, mode),
            None => corpus.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint.json"))
    }

    pub fn report_path(&self) -> PathBuf {
        self.report.clone().unwrap_or_else(|| self.out.join("report.json"))
    }

    /// Writes `<out>/<command>.config.json`.
    pub fn write_snapshot(&self, command: &str) -> Result<PathBuf> {
        let path = self.out.join(format!("{command}.config.json"));
        fsutil::write_atomic(&path, self.to_json()?.as_bytes())?;
        Ok(path)
    }
}
