use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    pub lambda: f64,
    /// RBF width; `None` uses `1 / (d * var)` over the training embeddings.
    pub gamma: Option<f64>,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: None,
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("ridge lambda must be positive, got {}", self.lambda)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("rbf gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// RBF kernel ridge regression on centred targets.
#[derive(Debug, Clone)]
pub struct KernelRidge {
    train: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    offset: f64,
    gamma: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn scale_gamma(xs: &[Vec<f64>]) -> f64 {
    let d = xs[0].len();
    let n = (xs.len() * d) as f64;
    let m = xs.iter().flatten().sum::<f64>() / n;
    let var = xs.iter().flatten().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0 / d as f64
    }
}

impl KernelRidge {
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], cfg: &RegressorConfig) -> Result<Self> {
        cfg.validate()?;
        if xs.is_empty() {
            return Err(Error::TooFewSamples { need: 1, got: 0 });
        }
        if xs.len() != ys.len() {
            return Err(Error::shape("KernelRidge::fit", (xs.len(), 1), (ys.len(), 1)));
        }
        let d = xs[0].len();
        if let Some(bad) = xs.iter().find(|x| x.len() != d) {
            return Err(Error::shape("KernelRidge::fit", (d, 1), (bad.len(), 1)));
        }
        let gamma = cfg.gamma.unwrap_or_else(|| scale_gamma(xs));
        let n = xs.len();
        let offset = ys.iter().sum::<f64>() / n as f64;
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = (-gamma * sq_dist(&xs[i], &xs[j])).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += cfg.lambda;
        }
        let y = DVector::from_iterator(n, ys.iter().map(|v| v - offset));
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::Linalg("kernel matrix is not positive definite".into()))?;
        Ok(Self {
            train: xs.to_vec(),
            alpha: chol.solve(&y),
            offset,
            gamma,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .train
                .iter()
                .zip(self.alpha.iter())
                .map(|(t, a)| a * (-self.gamma * sq_dist(t, x)).exp())
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LodoResult {
    /// `None` when the truths are constant and R² is undefined.
    pub r2: Option<f64>,
    /// One prediction per input, in input order.
    pub predictions: Vec<f64>,
    pub folds: usize,
}

pub fn r_squared(truths: &[f64], predictions: &[f64]) -> Option<f64> {
    let m = truths.iter().sum::<f64>() / truths.len() as f64;
    let ss_tot: f64 = truths.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot <= 0.0 {
        return None;
    }
    let ss_res: f64 = truths.iter().zip(predictions).map(|(t, p)| (t - p) * (t - p)).sum();
    Some(1.0 - ss_res / ss_tot)
}

/// Groups input indices by dyad, in dyad-id order.
pub fn dyad_folds(dyad_ids: &[String]) -> Vec<Vec<usize>> {
    let mut folds: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in dyad_ids.iter().enumerate() {
        folds.entry(d).or_default().push(i);
    }
    folds.into_values().collect()
}

/// Leave-one-dyad-out cross-validated kernel ridge regression.
pub fn lodo_regression(
    embeddings: &[Vec<f64>],
    scores: &[f64],
    dyad_ids: &[String],
    cfg: &RegressorConfig,
) -> Result<LodoResult> {
    let n = embeddings.len();
    if scores.len() != n || dyad_ids.len() != n {
        return Err(Error::shape("lodo_regression", (n, 1), (scores.len().min(dyad_ids.len()), 1)));
    }
    let folds = dyad_folds(dyad_ids);
    if folds.len() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: folds.len(),
        });
    }
    let fold_preds: Vec<Vec<(usize, f64)>> = folds
        .par_iter()
        .map(|held| {
            let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = (0..n)
                .filter(|i| !held.contains(i))
                .map(|i| (embeddings[i].clone(), scores[i]))
                .unzip();
            let model = KernelRidge::fit(&xs, &ys, cfg)?;
            Ok(held.iter().map(|&i| (i, model.predict(&embeddings[i]))).collect())
        })
        .collect::<Result<_>>()?;
    let mut predictions = vec![0.0; n];
    for (i, p) in fold_preds.into_iter().flatten() {
        predictions[i] = p;
    }
    Ok(LodoResult {
        r2: r_squared(scores, &predictions),
        predictions,
        folds: folds.len(),
    })
}
