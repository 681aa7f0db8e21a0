use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pca::pca2;
use super::regression::{lodo_regression, RegressorConfig};
use super::stats::{mae_stats, pearson};
use crate::corpus::{Corpus, Selection};
use crate::encoder::{encode_conversation, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::numeric::distance;
use crate::trainer::Checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefKind {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub kind: RefKind,
    pub conv_ids: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
}

impl ReferenceSet {
    /// The `count` lowest or highest scoring conversations of a sorted corpus.
    pub fn extremes(kind: RefKind, corpus: &Corpus, embeddings: &[Vec<f64>], count: usize) -> Result<Self> {
        let n = corpus.len();
        if count == 0 || count > n {
            return Err(Error::TooFewSamples { need: count.max(1), got: n });
        }
        let range = match kind {
            RefKind::Low => 0..count,
            RefKind::High => n - count..n,
        };
        Ok(Self {
            kind,
            conv_ids: range.clone().map(|i| corpus.get(i).conv_id.clone()).collect(),
            embeddings: range.map(|i| embeddings[i].clone()).collect(),
        })
    }
}

/// Mean Euclidean distance from `x` to every reference.
pub fn reference_distance(x: &[f64], refs: &ReferenceSet) -> Result<f64> {
    if refs.embeddings.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let mut total = 0.0;
    for r in &refs.embeddings {
        if r.len() != x.len() {
            return Err(Error::shape("reference_distance", (x.len(), 1), (r.len(), 1)));
        }
        total += distance(x, r);
    }
    Ok(total / refs.embeddings.len() as f64)
}

/// Embeds every conversation, in corpus order.
pub fn embed_corpus(corpus: &Corpus, cfg: &EncoderConfig, params: &EncoderParams<f64>) -> Result<Vec<Vec<f64>>> {
    if cfg.feat_dim != corpus.feat_dim() {
        return Err(Error::Config(format!(
            "checkpoint expects {} features, corpus has {}",
            cfg.feat_dim,
            corpus.feat_dim()
        )));
    }
    corpus
        .conversations()
        .par_iter()
        .map(|c| encode_conversation(c, cfg, params).map(|(e, _)| e.values))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub regressor: RegressorConfig,
    pub num_references: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            regressor: RegressorConfig::default(),
            num_references: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Low,
    High,
    Test,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Low => "low",
            Group::High => "high",
            Group::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub conv_id: String,
    pub dyad_id: String,
    pub truth: f64,
    pub prediction: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub conv_id: String,
    pub score: f64,
    pub group: Group,
    pub pc1: f64,
    pub pc2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub offset: usize,
    pub n_test: usize,
    pub n_folds: usize,
    pub rho_low: f64,
    pub p_low: f64,
    pub rho_high: f64,
    pub p_high: f64,
    /// `null` when the test scores are constant.
    pub r2: Option<f64>,
    pub mae_mean: f64,
    pub mae_sd: f64,
    pub regressor: RegressorConfig,
    pub reference_low: Vec<String>,
    pub reference_high: Vec<String>,
    pub pca_explained: [f64; 2],
    pub predictions: Vec<Prediction>,
    pub pca: Vec<PcaPoint>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn predictions_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["conv_id", "truth", "prediction", "abs_diff"]).map_err(csv_err)?;
        for p in &self.predictions {
            w.write_record([
                p.conv_id.clone(),
                p.truth.to_string(),
                p.prediction.to_string(),
                p.abs_diff.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn pca_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["conv_id", "score", "group", "pc1", "pc2"]).map_err(csv_err)?;
        for p in &self.pca {
            w.write_record([
                p.conv_id.clone(),
                p.score.to_string(),
                p.group.as_str().to_string(),
                p.pc1.to_string(),
                p.pc2.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Evaluation on precomputed embeddings (one per corpus conversation).
pub fn evaluate_embeddings(
    corpus: &Corpus,
    embeddings: &[Vec<f64>],
    selection: &Selection,
    k: usize,
    offset: usize,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if embeddings.len() != corpus.len() {
        return Err(Error::shape("evaluate", (corpus.len(), 1), (embeddings.len(), 1)));
    }
    if selection.test.len() < 3 {
        return Err(Error::TooFewSamples {
            need: 3,
            got: selection.test.len(),
        });
    }
    let low = ReferenceSet::extremes(RefKind::Low, corpus, embeddings, opts.num_references)?;
    let high = ReferenceSet::extremes(RefKind::High, corpus, embeddings, opts.num_references)?;

    let test_emb: Vec<Vec<f64>> = selection.test.iter().map(|&i| embeddings[i].clone()).collect();
    let truths: Vec<f64> = selection.test.iter().map(|&i| corpus.get(i).score).collect();
    let dyads: Vec<String> = selection.test.iter().map(|&i| corpus.get(i).dyad_id.clone()).collect();

    let d_low = test_emb.iter().map(|e| reference_distance(e, &low)).collect::<Result<Vec<_>>>()?;
    let d_high = test_emb.iter().map(|e| reference_distance(e, &high)).collect::<Result<Vec<_>>>()?;
    let (rho_low, p_low) = pearson(&d_low, &truths)?;
    let (rho_high, p_high) = pearson(&d_high, &truths)?;

    let lodo = lodo_regression(&test_emb, &truths, &dyads, &opts.regressor)?;
    let mae = mae_stats(&lodo.predictions, &truths)?;
    let predictions = selection
        .test
        .iter()
        .zip(&lodo.predictions)
        .zip(&mae.abs_diffs)
        .map(|((&i, &p), &a)| {
            let c = corpus.get(i);
            Prediction {
                conv_id: c.conv_id.clone(),
                dyad_id: c.dyad_id.clone(),
                truth: c.score,
                prediction: p,
                abs_diff: a,
            }
        })
        .collect();

    let members: Vec<(usize, Group)> = selection
        .low
        .iter()
        .map(|&i| (i, Group::Low))
        .chain(selection.high.iter().map(|&i| (i, Group::High)))
        .chain(selection.test.iter().map(|&i| (i, Group::Test)))
        .collect();
    let pca_in: Vec<Vec<f64>> = members.iter().map(|&(i, _)| embeddings[i].clone()).collect();
    let pca = pca2(&pca_in)?;
    let points = members
        .iter()
        .zip(&pca.coords)
        .map(|(&(i, group), c)| PcaPoint {
            conv_id: corpus.get(i).conv_id.clone(),
            score: corpus.get(i).score,
            group,
            pc1: c[0],
            pc2: c[1],
        })
        .collect();

    Ok(EvalReport {
        k,
        offset,
        n_test: selection.test.len(),
        n_folds: lodo.folds,
        rho_low,
        p_low,
        rho_high,
        p_high,
        r2: lodo.r2,
        mae_mean: mae.mean,
        mae_sd: mae.sd,
        regressor: opts.regressor,
        reference_low: low.conv_ids,
        reference_high: high.conv_ids,
        pca_explained: pca.explained_ratio(),
        predictions,
        pca: points,
    })
}

pub fn evaluate(
    checkpoint: &Checkpoint,
    corpus: &Corpus,
    selection: &Selection,
    k: usize,
    offset: usize,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    opts.regressor.validate()?;
    let embeddings = embed_corpus(corpus, &checkpoint.encoder_config, &checkpoint.params)?;
    evaluate_embeddings(corpus, &embeddings, selection, k, offset, opts)
}
