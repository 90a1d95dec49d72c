//! Cluster-coefficient-collapsed likelihood used by every label update.
//!
//! With `e = vec(Y' - Theta A W')`, `Xt = (X C') kron Theta` and
//! `b ~ N(0, (Lambda' kron R)^-1)`, integrating `b` out of
//! `N(e | Xt b, tau^-1 I)` gives
//!
//! ```text
//! log p(e) = -NT/2 log 2pi + (NT - MK)/2 log tau + M/2 log|Lambda'| + K/2 log|R|
//!            - 1/2 log|G| - tau/2 (e'e - g' G^-1 g)
//! G = Xt'Xt + Lambda' kron R / tau,    g = Xt' e
//! ```
//!
//! `Xt` is never formed: `Xt'Xt = (C'X'XC) kron (Theta'Theta)` and
//! `g = vec(Theta' E X C')` where `E` is the `T x N` residual, so each
//! candidate costs one `MK x MK` Cholesky factorization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, cholesky};
use crate::model::one_hot;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Quantities that stay fixed while labels are updated within one sweep.
#[derive(Debug, Clone)]
pub struct CollapsedStats {
    /// `X'X`, `P_c x P_c`.
    pub xtx: DMatrix<f64>,
    /// `Theta' Theta`, `M x M`.
    pub gram: DMatrix<f64>,
    /// `Theta' E X`, `M x P_c`; column `p` is predictor `p`'s contribution to `g`.
    pub proj: DMatrix<f64>,
    /// `e'e`.
    pub resid_sq: f64,
    /// `NT`.
    pub n_obs: usize,
}

impl CollapsedStats {
    /// Build from the `T x N` residual matrix `E = Y' - Theta A W'`.
    pub fn new(xtx: DMatrix<f64>, gram: DMatrix<f64>, theta: &DMatrix<f64>, resid: &DMatrix<f64>, x: &DMatrix<f64>) -> Self {
        let proj = theta.transpose() * resid * x;
        Self {
            xtx,
            gram,
            proj,
            resid_sq: resid.norm_squared(),
            n_obs: resid.len(),
        }
    }
}

/// One candidate labeling with its `G` and `g`.
#[derive(Debug, Clone)]
pub struct LabelUpdateWorkspace {
    /// Candidate labels `c'`; `0` marks predictors dropped from the design.
    pub labels: Vec<usize>,
    /// Number of non-null clusters `K~` in `c'`.
    pub n_clusters: usize,
    /// Diagonal of `Lambda_b'`, one entry per cluster in `c'`.
    pub lambda: Vec<f64>,
    pub g_mat: DMatrix<f64>,
    pub g_vec: DVector<f64>,
    /// `e'e`.
    pub resid_sq: f64,
    pub n_obs: usize,
}

impl LabelUpdateWorkspace {
    /// Assemble `G` and `g` through the Kronecker identities.
    pub fn from_stats(
        stats: &CollapsedStats,
        labels: &[usize],
        lambda: &[f64],
        tau: f64,
        penalty: &DMatrix<f64>,
    ) -> Result<Self> {
        let k = lambda.len();
        let m = stats.gram.nrows();
        if labels.len() != stats.xtx.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} predictors",
                labels.len(),
                stats.xtx.nrows()
            )));
        }
        if labels.iter().any(|&c| c > k) {
            return Err(Error::InvalidInput(format!("candidate label exceeds cluster count {k}")));
        }

        // S = C' X'X C restricted to non-null members
        let mut s = DMatrix::<f64>::zeros(k, k);
        for (p, &cp) in labels.iter().enumerate() {
            if cp == 0 {
                continue;
            }
            for (q, &cq) in labels.iter().enumerate() {
                if cq != 0 {
                    s[(cp - 1, cq - 1)] += stats.xtx[(p, q)];
                }
            }
        }

        let mut g_mat = DMatrix::zeros(m * k, m * k);
        for a in 0..k {
            for b in 0..k {
                let mut block = g_mat.view_mut((a * m, b * m), (m, m));
                block.copy_from(&stats.gram);
                block *= s[(a, b)];
                if a == b {
                    block.zip_apply(penalty, |g, r| *g += lambda[a] / tau * r);
                }
            }
        }

        let mut g_vec = DVector::zeros(m * k);
        for (p, &cp) in labels.iter().enumerate() {
            if cp != 0 {
                let mut seg = g_vec.rows_mut((cp - 1) * m, m);
                seg += stats.proj.column(p);
            }
        }

        Ok(Self {
            labels: labels.to_vec(),
            n_clusters: k,
            lambda: lambda.to_vec(),
            g_mat,
            g_vec,
            resid_sq: stats.resid_sq,
            n_obs: stats.n_obs,
        })
    }

    /// Assemble `G` and `g` from an explicit design `Xt` and residual `e`.
    pub fn from_dense(
        design: &DMatrix<f64>,
        resid: &DVector<f64>,
        labels: &[usize],
        lambda: &[f64],
        tau: f64,
        penalty: &DMatrix<f64>,
    ) -> Result<Self> {
        let k = lambda.len();
        if design.ncols() != penalty.nrows() * k || design.nrows() != resid.len() {
            return Err(Error::DimensionMismatch(format!(
                "design {:?} vs residual {} and {k} clusters",
                design.shape(),
                resid.len()
            )));
        }
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(lambda));
        let g_mat = design.transpose() * design + crate::model::kron(&lam, penalty) / tau;
        let g_vec = design.transpose() * resid;
        Ok(Self {
            labels: labels.to_vec(),
            n_clusters: k,
            lambda: lambda.to_vec(),
            g_mat,
            g_vec,
            resid_sq: resid.norm_squared(),
            n_obs: resid.len(),
        })
    }

    /// `C'` restricted to non-null members (null rows are all zero).
    pub fn one_hot(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.labels.len(), self.n_clusters);
        for (p, &label) in self.labels.iter().enumerate() {
            if label > 0 {
                c[(p, label - 1)] = 1.0;
            }
        }
        c
    }

    /// Same as [`one_hot`](Self::one_hot) for fully non-null labelings.
    pub fn strict_one_hot(&self) -> Result<DMatrix<f64>> {
        one_hot(&self.labels, self.n_clusters)
    }
}

/// Log marginal likelihood of the residual with cluster coefficients integrated out.
///
/// `log_det_penalty` is `log |R|` and `n_basis` is `M`.
pub fn marginal_loglik(ws: &LabelUpdateWorkspace, tau: f64, log_det_penalty: f64, n_basis: usize) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    let nt = ws.n_obs as f64;
    if ws.n_clusters == 0 {
        return Ok(-0.5 * nt * (LN_2PI - tau.ln()) - 0.5 * tau * ws.resid_sq);
    }
    let k = ws.n_clusters as f64;
    let m = n_basis as f64;
    let chol = cholesky(ws.g_mat.clone(), "collapsed precision G")?;
    let log_det_g = chol_log_det(&chol);
    let half_solve = chol
        .l_dirty()
        .solve_lower_triangular(&ws.g_vec)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let quad = ws.resid_sq - half_solve.norm_squared();
    let log_det_lambda: f64 = ws.lambda.iter().map(|l| l.ln()).sum();
    let value = -0.5 * nt * LN_2PI + 0.5 * (nt - m * k) * tau.ln() + 0.5 * m * log_det_lambda
        + 0.5 * k * log_det_penalty
        - 0.5 * log_det_g
        - 0.5 * tau * quad;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!("non-finite marginal likelihood ({value})")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::pspline_penalty;
    use crate::model::{assemble_design, kron};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian log-density of `e` under `tau^-1 I + Xt (Lambda^-1 kron R^-1) Xt'`.
    fn dense_oracle(design: &DMatrix<f64>, e: &DVector<f64>, lambda: &[f64], r: &DMatrix<f64>, tau: f64) -> f64 {
        let n = e.len();
        let lam_inv = DMatrix::from_diagonal(&DVector::from_iterator(lambda.len(), lambda.iter().map(|l| 1.0 / l)));
        let prior_cov = kron(&lam_inv, &r.clone().try_inverse().unwrap());
        let cov = DMatrix::identity(n, n) / tau + design * prior_cov * design.transpose();
        let chol = cov.cholesky().unwrap();
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = e.dot(&chol.solve(e));
        -0.5 * (n as f64 * LN_2PI + log_det + quad)
    }

    struct Instance {
        x: DMatrix<f64>,
        theta: DMatrix<f64>,
        resid: DMatrix<f64>,
        labels: Vec<usize>,
        lambda: Vec<f64>,
        tau: f64,
        r: DMatrix<f64>,
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, t: usize, m: usize, k: usize, p: usize) -> Instance {
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let x = DMatrix::from_fn(n, p, |_, _| u(-1.5, 1.5));
        let theta = DMatrix::from_fn(t, m, |_, _| u(0.0, 1.0));
        let resid = DMatrix::from_fn(t, n, |_, _| u(-2.0, 2.0));
        let mut labels: Vec<usize> = (0..p).map(|i| if i < k { i + 1 } else { 0 }).collect();
        for label in labels.iter_mut().skip(k) {
            *label = (u(0.0, (k + 1) as f64) as usize).min(k);
        }
        let lambda = (0..k).map(|_| u(0.2, 5.0)).collect();
        let tau = u(0.3, 3.0);
        let r = pspline_penalty(m, u(0.05, 1.0)).unwrap();
        Instance { x, theta, resid, labels, lambda, tau, r }
    }

    fn dense_design(inst: &Instance) -> DMatrix<f64> {
        let k = inst.lambda.len();
        let mut c = DMatrix::zeros(inst.labels.len(), k);
        for (p, &l) in inst.labels.iter().enumerate() {
            if l > 0 {
                c[(p, l - 1)] = 1.0;
            }
        }
        assemble_design(&inst.x, &c, &inst.theta).unwrap()
    }

    fn fast_value(inst: &Instance) -> f64 {
        let stats = CollapsedStats::new(
            inst.x.transpose() * &inst.x,
            inst.theta.transpose() * &inst.theta,
            &inst.theta,
            &inst.resid,
            &inst.x,
        );
        let ws = LabelUpdateWorkspace::from_stats(&stats, &inst.labels, &inst.lambda, inst.tau, &inst.r).unwrap();
        let log_det_r = inst.r.clone().determinant().ln();
        marginal_loglik(&ws, inst.tau, log_det_r, inst.r.nrows()).unwrap()
    }

    #[test]
    fn kronecker_route_matches_dense_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_instance(&mut rng, 4, 3, 3, 2, 5);
        let stats = CollapsedStats::new(
            inst.x.transpose() * &inst.x,
            inst.theta.transpose() * &inst.theta,
            &inst.theta,
            &inst.resid,
            &inst.x,
        );
        let fast = LabelUpdateWorkspace::from_stats(&stats, &inst.labels, &inst.lambda, inst.tau, &inst.r).unwrap();
        let e = DVector::from_column_slice(inst.resid.as_slice());
        let dense =
            LabelUpdateWorkspace::from_dense(&dense_design(&inst), &e, &inst.labels, &inst.lambda, inst.tau, &inst.r)
                .unwrap();
        assert!((fast.g_mat - dense.g_mat).amax() < 1e-10);
        assert!((fast.g_vec - dense.g_vec).amax() < 1e-10);
    }

    #[test]
    fn small_instance_matches_marginal_covariance() {
        // N = 3, T = 2, M = 2, one cluster: covariance is 6x6
        let x = DMatrix::from_row_slice(3, 2, &[0.4, -1.1, 1.3, 0.2, -0.7, 0.9]);
        let theta = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.3, 0.7]);
        let resid = DMatrix::from_row_slice(2, 3, &[0.5, -1.2, 2.0, 0.1, 0.3, -0.8]);
        let inst = Instance {
            x,
            theta,
            resid,
            labels: vec![1, 1],
            lambda: vec![1.7],
            tau: 0.9,
            r: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        };
        let e = DVector::from_column_slice(inst.resid.as_slice());
        let oracle = dense_oracle(&dense_design(&inst), &e, &inst.lambda, &inst.r, inst.tau);
        let value = fast_value(&inst);
        assert!((value - oracle).abs() <= 1e-8 * oracle.abs());
    }

    #[test]
    fn random_instances_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let n = rng.random_range(1..=5);
            let t = rng.random_range(2..=(60 / n).min(12));
            let m = rng.random_range(3..=4);
            let k = rng.random_range(1..=(12 / m));
            let p = k + rng.random_range(0..3);
            let inst = random_instance(&mut rng, n, t, m, k, p);
            let e = DVector::from_column_slice(inst.resid.as_slice());
            let oracle = dense_oracle(&dense_design(&inst), &e, &inst.lambda, &inst.r, inst.tau);
            let value = fast_value(&inst);
            assert!((value - oracle).abs() <= 1e-8 * oracle.abs(), "{value} vs {oracle}");
        }
    }

    #[test]
    fn empty_design_is_white_noise_density() {
        let resid = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.25]);
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let theta = DMatrix::identity(2, 3);
        let stats = CollapsedStats::new(x.transpose() * &x, theta.transpose() * &theta, &theta, &resid, &x);
        let r = pspline_penalty(3, 0.5).unwrap();
        let ws = LabelUpdateWorkspace::from_stats(&stats, &[0], &[], 2.0, &r).unwrap();
        let value = marginal_loglik(&ws, 2.0, 0.0, 3).unwrap();
        let expected = -2.0 * (2.0 * std::f64::consts::PI / 2.0).ln() - 0.5 * 2.0 * 5.3125;
        assert!((value - expected).abs() < 1e-12);
    }

    #[test]
    fn relabeling_clusters_leaves_value_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut inst = random_instance(&mut rng, 4, 5, 3, 3, 6);
        let base = fast_value(&inst);
        // swap clusters 1 and 3 along with their precisions
        for l in inst.labels.iter_mut() {
            *l = match *l {
                1 => 3,
                3 => 1,
                other => other,
            };
        }
        inst.lambda.swap(0, 2);
        assert!((fast_value(&inst) - base).abs() < 1e-10);
    }
}
