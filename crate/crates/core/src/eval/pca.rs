use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca2 {
    pub coords: Vec<[f64; 2]>,
    /// Top two eigenvalues of the sample covariance, descending.
    pub eigenvalues: [f64; 2],
    /// Unit loadings, largest-magnitude entry positive.
    pub components: [Vec<f64>; 2],
    pub total_variance: f64,
}

impl Pca2 {
    pub fn explained_ratio(&self) -> [f64; 2] {
        if self.total_variance > 0.0 {
            [self.eigenvalues[0] / self.total_variance, self.eigenvalues[1] / self.total_variance]
        } else {
            [0.0, 0.0]
        }
    }
}

pub fn pca2(embeddings: &[Vec<f64>]) -> Result<Pca2> {
    let n = embeddings.len();
    if n < 3 {
        return Err(Error::TooFewSamples { need: 3, got: n });
    }
    let d = embeddings[0].len();
    if let Some(bad) = embeddings.iter().find(|e| e.len() != d) {
        return Err(Error::shape("pca2", (d, 1), (bad.len(), 1)));
    }
    if d < 2 {
        return Err(Error::Config("pca2 needs at least 2 dimensions".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| embeddings[i][j]);
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let component = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k]);
        let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        col.iter().map(|v| sign * v).collect()
    };
    let components = [component(0), component(1)];
    let coords = (0..n)
        .map(|i| {
            let row = centred.row(i);
            let p = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [p(&components[0]), p(&components[1])]
        })
        .collect();
    Ok(Pca2 {
        coords,
        eigenvalues: [eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0)],
        components,
        total_variance,
    })
}
