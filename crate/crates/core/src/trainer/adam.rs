use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; advances `state.t` to the step index used.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape("adam_step", (params.len(), 1), (grads.len(), 1)));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::from_f64_lossy(cfg.beta1), T::from_f64_lossy(cfg.beta2));
    let one = T::one();
    let corr1 = one - b1.powi(t);
    let corr2 = one - b2.powi(t);
    let lr = T::from_f64_lossy(cfg.lr);
    let eps = T::from_f64_lossy(cfg.eps);
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].as_slice();
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (i, w) in p.as_mut_slice().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::vector(vec![1.0f64, -2.0, 0.5]);
        let g = Tensor::vector(vec![0.3, -5.0, 1e-3]);
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[g.clone()], &mut st, &AdamConfig::default()).unwrap();
        let start = [1.0, -2.0, 0.5];
        for k in 0..3 {
            let gk = g.as_slice()[k];
            let want = 1e-3 * gk.abs() / (gk.abs() + 1e-8);
            let moved = start[k] - p.as_slice()[k];
            assert!((moved - want * gk.signum()).abs() < 1e-15);
            assert!((moved.abs() - 1e-3).abs() < 1e-7);
        }
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::vector(vec![0.7f64; 4]);
        let before = p.clone();
        let mut st = AdamState::new([&p]);
        for _ in 0..10 {
            adam_step(&mut [&mut p], &[Tensor::zeros(4, 1)], &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut w = Tensor::scalar(1.0f64);
        let mut st = AdamState::new([&w]);
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        for _ in 0..500 {
            let g = Tensor::scalar(2.0 * w.as_slice()[0]);
            adam_step(&mut [&mut w], &[g], &mut st, &cfg).unwrap();
        }
        assert!(w.as_slice()[0].abs() < 0.1, "{}", w.as_slice()[0]);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::vector(vec![0.0f64; 2]);
        let mut st = AdamState::new([&p]);
        assert!(adam_step(&mut [&mut p], &[Tensor::zeros(3, 1)], &mut st, &AdamConfig::default()).is_err());
    }
}
