//! Sequential label updates with the cluster coefficients integrated out.
//!
//! Smoothing precisions are not collapsed. A proposed new cluster gets a
//! single auxiliary precision: the departing predictor's own precision when
//! it was a singleton, otherwise a fresh draw from the Gamma prior.

use rand::Rng;

use super::{draw_prior, GibbsSampler};
use crate::error::Result;
use crate::linalg::{normalize_log_weights, sample_categorical};
use crate::model::{compact_labels, ModelState};

/// Normalized candidate probabilities from one label update.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelProbabilities {
    pub log_weights: Vec<f64>,
    pub probs: Vec<f64>,
}

impl LabelProbabilities {
    pub fn from_log_weights(log_weights: Vec<f64>) -> Self {
        let probs = normalize_log_weights(&log_weights);
        Self { log_weights, probs }
    }
}

/// Chinese-restaurant conditional prior: `counts[k] / (n - 1 + alpha)` for
/// each existing cluster, then `alpha / (n - 1 + alpha)` for a new one.
///
/// `counts` are the cluster sizes without the predictor being updated, so
/// `n - 1` is their sum.
pub fn dp_prior_weights(counts: &[usize], alpha: f64) -> Vec<f64> {
    let others: usize = counts.iter().sum();
    let denom = others as f64 + alpha;
    counts
        .iter()
        .map(|&n| n as f64 / denom)
        .chain(std::iter::once(alpha / denom))
        .collect()
}

/// Probability of the null cluster with the mixing weight integrated out:
/// `(n_null + alpha0 / 2) / (p_c - 1 + alpha0)`.
pub fn null_prior_probability(n_null_others: usize, p_c: usize, alpha0: f64) -> f64 {
    (n_null_others as f64 + 0.5 * alpha0) / ((p_c - 1) as f64 + alpha0)
}

/// Conditional prior over `[null, existing clusters..., new]` for the
/// point-mass plus DP prior. `counts` are non-null cluster sizes without the
/// predictor being updated.
pub fn dppm_prior_weights(n_null_others: usize, counts: &[usize], alpha: f64, alpha0: f64) -> Vec<f64> {
    let p_c = n_null_others + counts.iter().sum::<usize>() + 1;
    let pi0 = null_prior_probability(n_null_others, p_c, alpha0);
    std::iter::once(pi0)
        .chain(dp_prior_weights(counts, alpha).into_iter().map(|w| (1.0 - pi0) * w))
        .collect()
}

fn cluster_sizes(labels: &[usize], skip: usize, n_clusters: usize) -> (usize, Vec<usize>) {
    let mut counts = vec![0usize; n_clusters];
    let mut n_null = 0;
    for (j, &c) in labels.iter().enumerate() {
        if j == skip {
            continue;
        }
        if c == 0 {
            n_null += 1;
        } else {
            counts[c - 1] += 1;
        }
    }
    (n_null, counts)
}

/// Remove predictor `i` from its cluster. When that empties a non-null
/// cluster, the cluster is deleted, higher labels shift down, and its
/// precision is returned.
fn detach(labels: &mut [usize], lambda_b: &mut Vec<f64>, i: usize) -> Option<f64> {
    let old = labels[i];
    if old == 0 || labels.iter().enumerate().any(|(j, &c)| j != i && c == old) {
        return None;
    }
    let lam = lambda_b.remove(old - 1);
    for c in labels.iter_mut() {
        if *c > old {
            *c -= 1;
        }
    }
    labels[i] = 0;
    Some(lam)
}

impl GibbsSampler<'_> {
    fn finish_label_update(&self, state: &mut ModelState) {
        canonicalize_labels(&mut state.labels, &mut state.lambda_b);
        // B no longer matches the labels; it is redrawn next
        let k = state.lambda_b.len();
        state.b = nalgebra::DMatrix::zeros(self.basis.n_basis(), k);
    }

    /// Candidate probabilities for predictor `i` under the DP prior, given
    /// labels in which `i` has been detached.
    pub(crate) fn dp_candidates(
        &self,
        stats: &super::CollapsedStats,
        state: &ModelState,
        i: usize,
        aux_lambda: f64,
        with_null: bool,
    ) -> Result<LabelProbabilities> {
        let k_minus = state.lambda_b.len();
        let (n_null, counts) = cluster_sizes(&state.labels, i, k_minus);
        let prior = if with_null {
            dppm_prior_weights(n_null, &counts, state.alpha, self.prior.alpha0)
        } else {
            dp_prior_weights(&counts, state.alpha)
        };

        let first = if with_null { 0 } else { 1 };
        let mut extended = state.lambda_b.clone();
        extended.push(aux_lambda);
        let candidates: Vec<(Vec<usize>, Vec<f64>)> = (first..=k_minus + 1)
            .map(|k| {
                let mut labels = state.labels.clone();
                labels[i] = k;
                let lambda = if k <= k_minus { state.lambda_b.clone() } else { extended.clone() };
                (labels, lambda)
            })
            .collect();
        let logliks = self.candidate_logliks(stats, &candidates, state.tau)?;
        let log_weights = logliks
            .iter()
            .zip(&prior)
            .map(|(ll, w)| ll + w.ln())
            .collect();
        Ok(LabelProbabilities::from_log_weights(log_weights))
    }

    /// Label update under the Dirichlet process prior.
    pub fn update_labels_dp<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let stats = self.collapsed_stats(state);
        for i in 0..state.labels.len() {
            let aux = match detach(&mut state.labels, &mut state.lambda_b, i) {
                Some(own) => own,
                None => draw_prior(self.prior.lambda, rng)?,
            };
            let probs = self.dp_candidates(&stats, state, i, aux, false)?;
            let pick = sample_categorical(&probs.probs, rng) + 1;
            state.labels[i] = pick;
            if pick > state.lambda_b.len() {
                state.lambda_b.push(aux);
            }
        }
        self.finish_label_update(state);
        Ok(())
    }

    /// Label update under the point mass plus Dirichlet process prior.
    /// Candidates are ordered null, existing clusters, new cluster.
    pub fn update_labels_dppm<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let stats = self.collapsed_stats(state);
        for i in 0..state.labels.len() {
            let aux = match detach(&mut state.labels, &mut state.lambda_b, i) {
                Some(own) => own,
                None => draw_prior(self.prior.lambda, rng)?,
            };
            let probs = self.dp_candidates(&stats, state, i, aux, true)?;
            let pick = sample_categorical(&probs.probs, rng);
            state.labels[i] = pick;
            if pick > state.lambda_b.len() {
                state.lambda_b.push(aux);
            }
        }
        self.finish_label_update(state);
        Ok(())
    }

    /// Inclusion probabilities `[excluded, included]` for predictor `i` of the
    /// point-mass baseline, where every included predictor is its own cluster.
    pub fn pm_probabilities(
        &self,
        stats: &super::CollapsedStats,
        included: &[bool],
        lambda_slab: &[f64],
        tau: f64,
        i: usize,
    ) -> Result<LabelProbabilities> {
        let build = |include_i: bool| {
            let mut labels = vec![0usize; included.len()];
            let mut lambda = Vec::new();
            for (p, &inc) in included.iter().enumerate() {
                if (p == i && include_i) || (p != i && inc) {
                    lambda.push(lambda_slab[p]);
                    labels[p] = lambda.len();
                }
            }
            (labels, lambda)
        };
        let candidates = vec![build(false), build(true)];
        let logliks = self.candidate_logliks(stats, &candidates, tau)?;
        let n_null = included.iter().enumerate().filter(|&(p, &inc)| p != i && !inc).count();
        let pi0 = null_prior_probability(n_null, included.len(), self.prior.alpha0);
        Ok(LabelProbabilities::from_log_weights(vec![
            logliks[0] + pi0.ln(),
            logliks[1] + (1.0 - pi0).ln(),
        ]))
    }

    /// Inclusion update for the point-mass baseline.
    pub fn update_labels_pm<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let stats = self.collapsed_stats(state);
        let mut included: Vec<bool> = state.labels.iter().map(|&c| c != 0).collect();
        for i in 0..included.len() {
            let probs = self.pm_probabilities(&stats, &included, &state.lambda_slab, state.tau, i)?;
            included[i] = sample_categorical(&probs.probs, rng) == 1;
        }
        let mut k = 0;
        state.lambda_b.clear();
        for (p, &inc) in included.iter().enumerate() {
            if inc {
                k += 1;
                state.labels[p] = k;
                state.lambda_b.push(state.lambda_slab[p]);
            } else {
                state.labels[p] = 0;
            }
        }
        self.finish_label_update(state);
        Ok(())
    }
}

/// Relabel to `1..=K` by first appearance and reorder `lambda_b` to match.
pub fn canonicalize_labels(labels: &mut [usize], lambda_b: &mut Vec<f64>) {
    let old_of_new = compact_labels(labels);
    let reordered: Vec<f64> = old_of_new.iter().map(|&old| lambda_b[old - 1]).collect();
    *lambda_b = reordered;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_predictor_always_opens_new_cluster() {
        let w = dp_prior_weights(&[], 0.7);
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn two_predictors_split_evenly_at_unit_alpha() {
        let w = dp_prior_weights(&[1], 1.0);
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn dp_weights_sum_to_one() {
        let w = dp_prior_weights(&[3, 1, 5], 2.3);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((w[2] - 5.0 / 11.3).abs() < 1e-15);
    }

    #[test]
    fn null_probability_examples() {
        assert!((null_prior_probability(0, 15, 2.0) - 1.0 / 16.0).abs() < 1e-15);
        assert!((null_prior_probability(14, 15, 2.0) - 15.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn dppm_weights_combine_levels() {
        let w = dppm_prior_weights(2, &[3, 1], 1.5, 2.0);
        // p_c = 7
        let pi0 = 3.0 / 8.0;
        assert!((w[0] - pi0).abs() < 1e-15);
        assert!((w[1] - (1.0 - pi0) * 3.0 / 5.5).abs() < 1e-15);
        assert!((w[3] - (1.0 - pi0) * 1.5 / 5.5).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // every other predictor null: the new cluster takes all non-null mass
        let w = dppm_prior_weights(14, &[], 1.0, 2.0);
        assert_eq!(w.len(), 2);
        assert!((w[1] - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn detach_removes_singletons_only() {
        let mut labels = vec![1, 2, 2, 3];
        let mut lambda = vec![0.1, 0.2, 0.3];
        assert_eq!(detach(&mut labels, &mut lambda, 1), None);
        assert_eq!(labels, vec![1, 2, 2, 3]);
        assert_eq!(detach(&mut labels, &mut lambda, 0), Some(0.1));
        assert_eq!(labels, vec![0, 1, 1, 2]);
        assert_eq!(lambda, vec![0.2, 0.3]);
        let mut labels = vec![0, 1];
        let mut lambda = vec![0.5];
        assert_eq!(detach(&mut labels, &mut lambda, 0), None);
    }

    #[test]
    fn canonical_labels_track_precisions() {
        let mut labels = vec![3, 1, 0, 3, 2];
        let mut lambda = vec![10.0, 20.0, 30.0];
        canonicalize_labels(&mut labels, &mut lambda);
        assert_eq!(labels, vec![1, 2, 0, 1, 3]);
        assert_eq!(lambda, vec![30.0, 10.0, 20.0]);
    }
}
