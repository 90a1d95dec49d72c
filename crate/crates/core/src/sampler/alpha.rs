//! Auxiliary-variable update of the Dirichlet process concentration.
//!
//! With a `Gamma(a, b)` prior, `K` occupied clusters among `n` items and
//! current value `alpha`:
//!
//! ```text
//! u ~ Beta(alpha + 1, n)
//! odds = (a + K - 1) / (n (b - ln u))
//! alpha ~ pi Gamma(a + K, b - ln u) + (1 - pi) Gamma(a + K - 1, b - ln u),  pi = odds / (1 + odds)
//! ```

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::draw_gamma;
use crate::error::{Error, Result};
use crate::model::GammaPrior;

pub fn update_alpha<R: Rng + ?Sized>(
    n_clusters: usize,
    n_items: usize,
    prior: GammaPrior,
    current: f64,
    rng: &mut R,
) -> Result<f64> {
    if n_clusters == 0 || n_items == 0 {
        return Err(Error::InvalidInput(format!(
            "concentration update needs K >= 1 and n >= 1, got K = {n_clusters}, n = {n_items}"
        )));
    }
    if n_clusters > n_items {
        return Err(Error::InvalidInput(format!(
            "{n_clusters} clusters cannot hold only {n_items} items"
        )));
    }
    let beta = Beta::new(current + 1.0, n_items as f64)
        .map_err(|e| Error::Numerical(format!("Beta({}, {n_items}): {e}", current + 1.0)))?;
    let u: f64 = beta.sample(rng).max(f64::MIN_POSITIVE);
    let rate = prior.rate - u.ln();
    let k = n_clusters as f64;
    let odds = (prior.shape + k - 1.0) / (n_items as f64 * rate);
    let weight = odds / (1.0 + odds);
    let shape = if rng.random::<f64>() < weight {
        prior.shape + k
    } else {
        prior.shape + k - 1.0
    };
    draw_gamma(shape, rate, rng)
}
