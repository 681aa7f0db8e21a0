//! Conversation data model, JSON Lines storage, per-speaker normalization,
//! extreme-group selection and the synthetic corpus generator.

mod normalize;
mod select;
mod synth;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

pub use normalize::{normalize_per_speaker, NormMode};
pub use select::{select_extremes, Selection, SelectionSpec};
pub use synth::{generate_synthetic, signal_direction, SynthSpec, CLIENT_SUFFIX, THERAPIST_SUFFIX};

pub const DEFAULT_FEAT_DIM: usize = 88;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub speaker: String,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub conv_id: String,
    pub dyad_id: String,
    pub score: f64,
    pub turns: Vec<TurnRecord>,
}

impl Conversation {
    pub fn num_turns(&self) -> usize {
        self.turns.len()
    }

    pub fn speakers(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for t in &self.turns {
            if !seen.contains(&t.speaker.as_str()) {
                seen.push(&t.speaker);
            }
        }
        seen
    }
}

/// Conversations ordered ascending by score (ties by `conv_id`), so index
/// `i` is the `(i+1)`-th lowest-rated conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    feat_dim: usize,
    conversations: Vec<Conversation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub feat_dim: usize,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_spec: Option<SynthSpec>,
}

impl Corpus {
    pub fn new(feat_dim: usize, mut conversations: Vec<Conversation>) -> Result<Self> {
        let mut ids = HashSet::new();
        for c in &conversations {
            if !ids.insert(c.conv_id.as_str()) {
                return Err(Error::DuplicateId(c.conv_id.clone()));
            }
            validate(c, feat_dim)?;
        }
        sort_by_score(&mut conversations);
        Ok(Self {
            feat_dim,
            conversations,
        })
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn len(&self) -> usize {
        self.conversations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conversations.is_empty()
    }

    pub fn conversations(&self) -> &[Conversation] {
        &self.conversations
    }

    pub fn get(&self, i: usize) -> &Conversation {
        &self.conversations[i]
    }

    pub fn index_of(&self, conv_id: &str) -> Option<usize> {
        self.conversations.iter().position(|c| c.conv_id == conv_id)
    }

    pub fn max_turns(&self) -> usize {
        self.conversations.iter().map(Conversation::num_turns).max().unwrap_or(0)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.conversations.iter().map(|c| c.score).collect()
    }

    /// Same ordering invariant, features replaced by `f`.
    pub(crate) fn map_conversations(&self, f: impl FnOnce(&[Conversation]) -> Vec<Conversation>) -> Self {
        Self {
            feat_dim: self.feat_dim,
            conversations: f(&self.conversations),
        }
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for c in &self.conversations {
            out.push_str(&serde_json::to_string(c)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses JSON Lines. With `feat_dim = None` the first turn fixes the dimension.
    pub fn from_jsonl(text: &str, feat_dim: Option<usize>) -> Result<Self> {
        let mut dim = feat_dim;
        let mut convs = Vec::new();
        let mut ids = HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let c: Conversation = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            let d = *dim.get_or_insert_with(|| c.turns.first().map_or(0, |t| t.features.len()));
            validate(&c, d).map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            if !ids.insert(c.conv_id.clone()) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate conversation id {}", c.conv_id),
                });
            }
            convs.push(c);
        }
        let feat_dim = dim.unwrap_or(DEFAULT_FEAT_DIM);
        sort_by_score(&mut convs);
        Ok(Self {
            feat_dim,
            conversations: convs,
        })
    }

    pub fn manifest(&self, synth_spec: Option<SynthSpec>) -> Manifest {
        Manifest {
            feat_dim: self.feat_dim,
            count: self.len(),
            synth_spec,
        }
    }

    /// Writes `path` and a `manifest.json` next to it.
    pub fn save(&self, path: &Path, synth_spec: Option<SynthSpec>) -> Result<()> {
        fsutil::write_atomic(path, self.to_jsonl()?.as_bytes())?;
        let manifest = serde_json::to_string_pretty(&self.manifest(synth_spec))?;
        fsutil::write_atomic(&manifest_path(path), manifest.as_bytes())
    }
}

pub fn manifest_path(corpus_path: &Path) -> std::path::PathBuf {
    corpus_path.with_file_name("manifest.json")
}

/// Loads a corpus file; `feat_dim` comes from the sibling manifest when present.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = fsutil::read_to_string(path)?;
    let mpath = manifest_path(path);
    let dim = if mpath.exists() {
        let m: Manifest = serde_json::from_str(&fsutil::read_to_string(&mpath)?)?;
        Some(m.feat_dim)
    } else {
        None
    };
    Corpus::from_jsonl(&text, dim)
}

fn validate(c: &Conversation, feat_dim: usize) -> Result<()> {
    if c.turns.is_empty() {
        return Err(Error::EmptyConversation(c.conv_id.clone()));
    }
    if !c.score.is_finite() {
        return Err(Error::Config(format!("conversation {} has non-finite score", c.conv_id)));
    }
    for (k, t) in c.turns.iter().enumerate() {
        if t.features.len() != feat_dim {
            return Err(Error::Config(format!(
                "conversation {} turn {}: {} features, expected {}",
                c.conv_id,
                k,
                t.features.len(),
                feat_dim
            )));
        }
        if t.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "conversation {} turn {}: non-finite feature",
                c.conv_id, k
            )));
        }
    }
    let n_speakers = c.speakers().len();
    if n_speakers != 2 {
        log::warn!("conversation {} has {} distinct speakers", c.conv_id, n_speakers);
    }
    Ok(())
}

fn sort_by_score(convs: &mut [Conversation]) {
    convs.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.conv_id.cmp(&b.conv_id)));
}
