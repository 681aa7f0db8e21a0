//! Central finite-difference checking of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tol: f64,
    /// Check at most this many coordinates, sampled uniformly without replacement.
    pub max_coords: Option<usize>,
    pub seed: u64,
    /// A coordinate whose one-sided slopes differ by more than
    /// `kink_factor * h * max(1, |f|)` sits on a non-smooth point and is excluded.
    pub kink_factor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            max_coords: None,
            seed: 0,
            kink_factor: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub pass: bool,
    pub checked: usize,
    pub excluded: usize,
    /// (parameter index, flat entry index) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
}

/// Compares `analytic` against `(f(p + h) - f(p - h)) / 2h` per coordinate.
/// Relative error uses the denominator `max(|a|, |g|, 1e-8)`.
pub fn finite_diff_check<T, F>(
    mut loss_fn: F,
    params: &[Tensor<T>],
    analytic: &[Tensor<T>],
    opts: GradCheckOptions,
) -> GradCheckReport
where
    T: Scalar,
    F: FnMut(&[Tensor<T>]) -> T,
{
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.len()).map(move |k| (p, k)))
        .collect();
    let chosen: Vec<(usize, usize)> = match opts.max_coords {
        Some(limit) if limit < coords.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut idx = sample(&mut rng, coords.len(), limit).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| coords[i]).collect()
        }
        _ => coords,
    };

    let mut work: Vec<Tensor<T>> = params.to_vec();
    let h = T::from_f64_lossy(opts.h);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        pass: true,
        checked: 0,
        excluded: 0,
        worst: None,
    };
    for (p, k) in chosen {
        let orig = work[p].as_slice()[k];
        let f0 = loss_fn(&work).to_f64_lossy();
        work[p].as_mut_slice()[k] = orig + h;
        let fp = loss_fn(&work).to_f64_lossy();
        work[p].as_mut_slice()[k] = orig - h;
        let fm = loss_fn(&work).to_f64_lossy();
        work[p].as_mut_slice()[k] = orig;

        let fwd = (fp - f0) / opts.h;
        let bwd = (f0 - fm) / opts.h;
        if (fwd - bwd).abs() > opts.kink_factor * opts.h * f0.abs().max(1.0) {
            report.excluded += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * opts.h);
        let a = analytic[p].as_slice()[k].to_f64_lossy();
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((p, k));
        }
    }
    report.pass = report.max_rel_err < opts.tol;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_at_three() {
        let p = vec![Tensor::scalar(3.0f64)];
        let g = vec![Tensor::scalar(6.0)];
        let r = finite_diff_check(
            |ps: &[Tensor<f64>]| ps[0].as_slice()[0].powi(2),
            &p,
            &g,
            GradCheckOptions::default(),
        );
        assert!(r.pass);
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_err < 1e-6);
    }

    #[test]
    fn abs_at_zero_is_excluded() {
        let p = vec![Tensor::scalar(0.0f64)];
        let g = vec![Tensor::scalar(0.0)];
        let r = finite_diff_check(
            |ps: &[Tensor<f64>]| ps[0].as_slice()[0].abs(),
            &p,
            &g,
            GradCheckOptions::default(),
        );
        assert_eq!(r.excluded, 1);
        assert_eq!(r.checked, 0);
        assert!(r.pass);
    }

    #[test]
    fn wrong_gradient_fails() {
        let p = vec![Tensor::scalar(3.0f64)];
        let g = vec![Tensor::scalar(5.0)];
        let r = finite_diff_check(
            |ps: &[Tensor<f64>]| ps[0].as_slice()[0].powi(2),
            &p,
            &g,
            GradCheckOptions::default(),
        );
        assert!(!r.pass);
        assert_eq!(r.worst, Some((0, 0)));
    }

    #[test]
    fn subsampling_limits_coordinates() {
        let p = vec![Tensor::vector(vec![1.0f64; 50])];
        let g = vec![Tensor::vector(vec![2.0; 50])];
        let r = finite_diff_check(
            |ps: &[Tensor<f64>]| ps[0].as_slice().iter().map(|x| x * x).sum(),
            &p,
            &g,
            GradCheckOptions {
                max_coords: Some(7),
                ..Default::default()
            },
        );
        assert_eq!(r.checked, 7);
        assert!(r.pass);
    }
}
