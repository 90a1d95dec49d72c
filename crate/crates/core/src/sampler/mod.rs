//! Gibbs sampler for the four prior variants.
//!
//! One iteration updates, in order: labels (collapsed over the cluster
//! coefficients), cluster coefficients `B`, free coefficients `A`, the
//! smoothing and error precisions, and finally the concentration `alpha`.

mod alpha;
pub(crate) mod chain;
mod collapsed;
mod labels;

pub use alpha::update_alpha;
pub use chain::{run_chain, ChainOptions, ChainOutput};
pub use collapsed::{marginal_loglik, CollapsedStats, LabelUpdateWorkspace};
pub use labels::{dp_prior_weights, dppm_prior_weights, null_prior_probability, LabelProbabilities};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, sample_gaussian_canonical};
use crate::model::{FunctionalDataset, GammaPrior, ModelState, PriorConfig, Variant};

/// Floor and ceiling applied to every sampled precision.
pub const PRECISION_FLOOR: f64 = 1e-10;
pub const PRECISION_CEIL: f64 = 1e10;

/// Which coefficient block to update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Free,
    Clustered,
}

pub(crate) fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(format!("Gamma({shape}, {rate}): {e}")))?;
    Ok(dist.sample(rng).clamp(PRECISION_FLOOR, PRECISION_CEIL))
}

pub(crate) fn draw_prior<R: Rng + ?Sized>(prior: GammaPrior, rng: &mut R) -> Result<f64> {
    draw_gamma(prior.shape, prior.rate, rng)
}

/// Cached cross-products for one dataset/basis pair.
#[derive(Debug)]
pub struct GibbsSampler<'a> {
    data: &'a FunctionalDataset,
    basis: &'a BasisSystem,
    prior: PriorConfig,
    xtx: DMatrix<f64>,
    wtw: DMatrix<f64>,
    gram: DMatrix<f64>,
    parallel_candidates: bool,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(data: &'a FunctionalDataset, basis: &'a BasisSystem, prior: PriorConfig) -> Result<Self> {
        prior.validate()?;
        if basis.n_grid() != data.n_grid() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} grid points, data has {}",
                basis.n_grid(),
                data.n_grid()
            )));
        }
        if basis.n_basis() != prior.n_basis {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} functions but the prior expects {}",
                basis.n_basis(),
                prior.n_basis
            )));
        }
        let theta = basis.theta();
        Ok(Self {
            data,
            basis,
            xtx: data.x().transpose() * data.x(),
            wtw: data.w().transpose() * data.w(),
            gram: theta.transpose() * theta,
            prior,
            parallel_candidates: false,
        })
    }

    /// Evaluate the candidates of each label update on the rayon pool.
    pub fn with_parallel_candidates(mut self, parallel: bool) -> Self {
        self.parallel_candidates = parallel;
        self
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn data(&self) -> &FunctionalDataset {
        self.data
    }

    pub fn basis(&self) -> &BasisSystem {
        self.basis
    }

    /// Starting point: every clusterable predictor in its own non-null
    /// cluster, zero coefficients, unit smoothing precisions and `tau` set
    /// to the inverse response variance.
    pub fn initial_state(&self) -> ModelState {
        let m = self.basis.n_basis();
        let p_c = self.data.n_clust();
        let y = self.data.y();
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len().max(2) - 1) as f64;
        let tau = if var > 0.0 { (1.0 / var).clamp(PRECISION_FLOOR, PRECISION_CEIL) } else { 1.0 };
        ModelState {
            a: DMatrix::zeros(m, self.data.n_free()),
            b: DMatrix::zeros(m, p_c),
            labels: (1..=p_c).collect(),
            lambda_a: vec![1.0; self.data.n_free()],
            lambda_b: vec![1.0; p_c],
            lambda_slab: if self.prior.variant == Variant::FosrPm { vec![1.0; p_c] } else { Vec::new() },
            tau,
            alpha: 1.0,
            iteration: 0,
        }
    }

    /// `T x N` residual after removing the free effects.
    fn free_residual(&self, state: &ModelState) -> DMatrix<f64> {
        let theta = self.basis.theta();
        self.data.y().transpose() - theta * &state.a * self.data.w().transpose()
    }

    /// `T x N` residual after removing the clustered effects.
    fn clustered_residual(&self, state: &ModelState) -> DMatrix<f64> {
        let curves = state.clustered_curves(self.basis.theta());
        self.data.y().transpose() - curves * self.data.x().transpose()
    }

    /// Sufficient statistics for the collapsed label updates at the current `A`.
    pub fn collapsed_stats(&self, state: &ModelState) -> CollapsedStats {
        let resid = self.free_residual(state);
        CollapsedStats::new(self.xtx.clone(), self.gram.clone(), self.basis.theta(), &resid, self.data.x())
    }

    fn workspace(
        &self,
        stats: &CollapsedStats,
        labels: &[usize],
        lambda: &[f64],
        tau: f64,
    ) -> Result<LabelUpdateWorkspace> {
        LabelUpdateWorkspace::from_stats(stats, labels, lambda, tau, self.basis.penalty())
    }

    /// Collapsed log-likelihood of one candidate labeling.
    pub fn candidate_loglik(
        &self,
        stats: &CollapsedStats,
        labels: &[usize],
        lambda: &[f64],
        tau: f64,
    ) -> Result<f64> {
        let ws = self.workspace(stats, labels, lambda, tau)?;
        marginal_loglik(&ws, tau, self.basis.log_det_penalty(), self.basis.n_basis())
    }

    /// Log-likelihoods of several candidates, optionally on the rayon pool.
    pub(crate) fn candidate_logliks(
        &self,
        stats: &CollapsedStats,
        candidates: &[(Vec<usize>, Vec<f64>)],
        tau: f64,
    ) -> Result<Vec<f64>> {
        if self.parallel_candidates && candidates.len() > 1 {
            candidates
                .par_iter()
                .map(|(labels, lambda)| self.candidate_loglik(stats, labels, lambda, tau))
                .collect()
        } else {
            candidates
                .iter()
                .map(|(labels, lambda)| self.candidate_loglik(stats, labels, lambda, tau))
                .collect()
        }
    }

    /// Draw `A` or `B` from its Gaussian full conditional.
    pub fn update_coefficients<R: Rng + ?Sized>(&self, state: &mut ModelState, which: Block, rng: &mut R) -> Result<()> {
        let m = self.basis.n_basis();
        match which {
            Block::Clustered => {
                let k = state.lambda_b.len();
                if k == 0 {
                    state.b = DMatrix::zeros(m, 0);
                    return Ok(());
                }
                let stats = self.collapsed_stats(state);
                let ws = self.workspace(&stats, &state.labels, &state.lambda_b, state.tau)?;
                // precision tau G, linear term tau g
                let chol = cholesky(ws.g_mat * state.tau, "cluster coefficient precision")?;
                let h = ws.g_vec * state.tau;
                let draw = sample_gaussian_canonical(&chol, &h, rng);
                state.b = DMatrix::from_column_slice(m, k, draw.as_slice());
            }
            Block::Free => {
                let p_f = self.data.n_free();
                let resid = self.clustered_residual(state);
                let rhs = self.basis.theta().transpose() * resid * self.data.w() * state.tau;
                let mut precision = crate::model::kron(&self.wtw, &self.gram) * state.tau;
                let penalty = self.basis.penalty();
                for (p, &lam) in state.lambda_a.iter().enumerate() {
                    let mut block = precision.view_mut((p * m, p * m), (m, m));
                    block.zip_apply(penalty, |q, r| *q += lam * r);
                }
                let chol = cholesky(precision, "free coefficient precision")?;
                let h = DVector::from_column_slice(rhs.as_slice());
                let draw = sample_gaussian_canonical(&chol, &h, rng);
                state.a = DMatrix::from_column_slice(m, p_f, draw.as_slice());
            }
        }
        Ok(())
    }

    /// Conjugate Gamma draws of the smoothing precisions and `tau`.
    pub fn update_precisions<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let penalty = self.basis.penalty();
        let lam = self.prior.lambda;
        let half_m = 0.5 * self.basis.n_basis() as f64;
        let quad = |col: nalgebra::DVectorView<f64>| (col.transpose() * penalty * col)[(0, 0)];

        for p in 0..state.lambda_a.len() {
            let q = quad(state.a.column(p));
            state.lambda_a[p] = draw_gamma(lam.shape + half_m, lam.rate + 0.5 * q, rng)?;
        }
        if self.prior.variant == Variant::FosrPm {
            // included predictors own one singleton cluster each; excluded
            // predictors' slab precisions are informed by the prior only
            let mut cluster = 0;
            for p in 0..state.labels.len() {
                if state.labels[p] == 0 {
                    state.lambda_slab[p] = draw_prior(lam, rng)?;
                } else {
                    let q = quad(state.b.column(state.labels[p] - 1));
                    state.lambda_slab[p] = draw_gamma(lam.shape + half_m, lam.rate + 0.5 * q, rng)?;
                    state.lambda_b[cluster] = state.lambda_slab[p];
                    cluster += 1;
                }
            }
        } else {
            for k in 0..state.lambda_b.len() {
                let q = quad(state.b.column(k));
                state.lambda_b[k] = draw_gamma(lam.shape + half_m, lam.rate + 0.5 * q, rng)?;
            }
        }

        let resid = self.clustered_residual(state) - self.basis.theta() * &state.a * self.data.w().transpose();
        let n_obs = resid.len() as f64;
        state.tau = draw_gamma(
            self.prior.tau.shape + 0.5 * n_obs,
            self.prior.tau.rate + 0.5 * resid.norm_squared(),
            rng,
        )?;
        Ok(())
    }

    /// Concentration update for the DP-based variants.
    pub fn update_concentration<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        match self.prior.variant {
            Variant::FosrDp => {
                state.alpha = update_alpha(state.n_clusters(), state.labels.len(), self.prior.alpha, state.alpha, rng)?;
            }
            Variant::FosrDppm => {
                let n_nonnull = state.n_nonnull();
                state.alpha = if n_nonnull == 0 {
                    // no predictor is governed by the DP: the full conditional is the prior
                    draw_prior(self.prior.alpha, rng)?
                } else {
                    update_alpha(state.n_clusters(), n_nonnull, self.prior.alpha, state.alpha, rng)?
                };
            }
            Variant::Fosr | Variant::FosrPm => {}
        }
        Ok(())
    }

    /// Label update for the configured variant (no-op for FOSR).
    pub fn update_labels<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        match self.prior.variant {
            Variant::Fosr => Ok(()),
            Variant::FosrPm => self.update_labels_pm(state, rng),
            Variant::FosrDp => self.update_labels_dp(state, rng),
            Variant::FosrDppm => self.update_labels_dppm(state, rng),
        }
    }

    /// One full Gibbs iteration.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let iteration = state.iteration;
        let attach = |e: Error| Error::ChainAborted {
            iteration,
            source: Box::new(e),
        };
        self.update_labels(state, rng).map_err(attach)?;
        self.update_coefficients(state, Block::Clustered, rng).map_err(attach)?;
        self.update_coefficients(state, Block::Free, rng).map_err(attach)?;
        self.update_precisions(state, rng).map_err(attach)?;
        self.update_concentration(state, rng).map_err(attach)?;
        state.iteration += 1;
        Ok(())
    }
}
