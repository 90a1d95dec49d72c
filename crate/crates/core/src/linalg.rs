//! Small dense helpers shared by the sampler.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub(crate) fn cholesky(mat: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let dim = mat.nrows();
    mat.cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what} ({dim}x{dim}) is not positive definite")))
}

/// `log |A|` from a Cholesky factor of `A`.
pub(crate) fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Draw from `N(Q^-1 h, Q^-1)` given the Cholesky factor of `Q`.
pub(crate) fn sample_gaussian_canonical<R: Rng + ?Sized>(
    chol: &Cholesky<f64, Dyn>,
    h: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let mean = chol.solve(h);
    let z = DVector::from_fn(h.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    // L' x = z gives Cov(x) = (L L')^-1
    let l = chol.l_dirty();
    let dev = l
        .tr_solve_lower_triangular(&z)
        .expect("Cholesky diagonal is strictly positive");
    mean + dev
}

/// Normalize log-weights in place to probabilities via log-sum-exp.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}

/// Inverse-CDF draw over `probs` in their given order.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u within rounding of 1: last candidate with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
