//! Data, parameter state and the Kronecker algebra of the vectorized model.
//!
//! The transposed model `Y' = Theta A W' + Theta B (X C)' + E'` is vectorized
//! by stacking the columns of `Y'`, so the response vector is made of `N`
//! subject blocks of length `T`:
//!
//! ```text
//! y = vec(Y') = (W kron Theta) vec(A) + ((X C) kron Theta) vec(B) + e
//! ```
//!
//! Every routine in this crate uses that order.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{DEFAULT_DEGREE, DEFAULT_ETA};
use crate::error::{Error, Result};

/// Responses on a common grid plus the two groups of scalar predictors.
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    y: DMatrix<f64>,
    w: DMatrix<f64>,
    x: DMatrix<f64>,
    grid: Vec<f64>,
    free_names: Vec<String>,
    clust_names: Vec<String>,
}

impl FunctionalDataset {
    /// `y` is `N x T`, `w` is `N x P_f` (intercept included by the caller),
    /// `x` is `N x P_c`.
    pub fn new(y: DMatrix<f64>, w: DMatrix<f64>, x: DMatrix<f64>, grid: Vec<f64>) -> Result<Self> {
        let free_names = (0..w.ncols()).map(|p| format!("w{}", p + 1)).collect();
        let clust_names = (0..x.ncols()).map(|p| format!("x{}", p + 1)).collect();
        Self::with_names(y, w, x, grid, free_names, clust_names)
    }

    pub fn with_names(
        y: DMatrix<f64>,
        w: DMatrix<f64>,
        x: DMatrix<f64>,
        grid: Vec<f64>,
        free_names: Vec<String>,
        clust_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.nrows();
        if w.nrows() != n || x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "Y has {n} rows, W has {}, X has {}",
                w.nrows(),
                x.nrows()
            )));
        }
        if y.ncols() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "Y has {} columns but the grid has {} points",
                y.ncols(),
                grid.len()
            )));
        }
        if w.ncols() == 0 {
            return Err(Error::InvalidInput(
                "at least one free-effect column (the intercept) is required".into(),
            ));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidInput("at least one clusterable predictor is required".into()));
        }
        if n == 0 {
            return Err(Error::InvalidInput("dataset has no subjects".into()));
        }
        if free_names.len() != w.ncols() || clust_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch("predictor names do not match columns".into()));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&y) || !finite(&w) || !finite(&x) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Self {
            y,
            w,
            x,
            grid,
            free_names,
            clust_names,
        })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn free_names(&self) -> &[String] {
        &self.free_names
    }

    pub fn clust_names(&self) -> &[String] {
        &self.clust_names
    }

    pub fn n_subjects(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_grid(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_free(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_clust(&self) -> usize {
        self.x.ncols()
    }

    /// Copy of the dataset with clusterable columns reordered: column `p` of
    /// the result is column `order[p]` of `self`.
    pub fn permute_clusterable(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_clust() {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        let x = DMatrix::from_fn(self.n_subjects(), order.len(), |i, p| self.x[(i, order[p])]);
        let names = order.iter().map(|&p| self.clust_names[p].clone()).collect();
        Self::with_names(
            self.y.clone(),
            self.w.clone(),
            x,
            self.grid.clone(),
            self.free_names.clone(),
            names,
        )
    }
}

/// Prior family for the clusterable coefficient curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Independent smoothing prior per predictor.
    #[serde(rename = "fosr")]
    Fosr,
    /// Point mass at zero mixed with the smoothing prior.
    #[serde(rename = "fosr-pm")]
    FosrPm,
    /// Dirichlet process clustering.
    #[serde(rename = "fosr-dp")]
    FosrDp,
    /// Point mass at zero mixed with a Dirichlet process.
    #[serde(rename = "fosr-dppm")]
    FosrDppm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Fosr, Variant::FosrPm, Variant::FosrDp, Variant::FosrDppm];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Fosr => "fosr",
            Variant::FosrPm => "fosr-pm",
            Variant::FosrDp => "fosr-dp",
            Variant::FosrDppm => "fosr-dppm",
        }
    }

    /// Whether predictors can be assigned to the null (zero) cluster.
    pub fn has_null_cluster(self) -> bool {
        matches!(self, Variant::FosrPm | Variant::FosrDppm)
    }

    /// Whether labels are sampled at all.
    pub fn samples_labels(self) -> bool {
        self != Variant::Fosr
    }

    /// Whether the concentration parameter is part of the model.
    pub fn has_concentration(self) -> bool {
        matches!(self, Variant::FosrDp | Variant::FosrDppm)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fosr" => Ok(Variant::Fosr),
            "fosr-pm" | "fosr_pm" | "pm" => Ok(Variant::FosrPm),
            "fosr-dp" | "fosr_dp" | "dp" => Ok(Variant::FosrDp),
            "fosr-dppm" | "fosr_dppm" | "dppm" => Ok(Variant::FosrDppm),
            other => Err(Error::InvalidInput(format!(
                "unknown variant '{other}' (expected fosr, fosr-pm, fosr-dp or fosr-dppm)"
            ))),
        }
    }
}

/// Shape/rate pair of a Gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{what} prior needs positive shape and rate, got ({}, {})",
                self.shape, self.rate
            )))
        }
    }
}

/// Hyperparameters and prior variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub variant: Variant,
    /// Smoothing precisions `lambda`.
    pub lambda: GammaPrior,
    /// Error precision `tau`.
    pub tau: GammaPrior,
    /// Concentration `alpha`.
    pub alpha: GammaPrior,
    /// Symmetric Dirichlet weight on (null, non-null); 2 makes `pi_0` uniform.
    pub alpha0: f64,
    pub n_basis: usize,
    pub eta: f64,
    pub degree: usize,
}

impl PriorConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            lambda: GammaPrior::new(0.01, 0.01),
            tau: GammaPrior::new(0.01, 0.01),
            alpha: GammaPrior::new(1.0, 1.0),
            alpha0: 2.0,
            n_basis: 8,
            eta: DEFAULT_ETA,
            degree: DEFAULT_DEGREE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lambda.validate("lambda")?;
        self.tau.validate("tau")?;
        self.alpha.validate("alpha")?;
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidInput(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if self.n_basis < 3 || self.n_basis < self.degree + 1 {
            return Err(Error::InvalidInput(format!(
                "basis dimension {} too small for degree {}",
                self.n_basis, self.degree
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidInput(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        Ok(())
    }
}

/// Everything sampled in one Gibbs iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// `M x P_f` free-effect basis coefficients.
    pub a: DMatrix<f64>,
    /// `M x K` cluster-level basis coefficients.
    pub b: DMatrix<f64>,
    /// Cluster label per clusterable predictor; `0` is the null cluster.
    pub labels: Vec<usize>,
    pub lambda_a: Vec<f64>,
    /// One smoothing precision per non-null cluster.
    pub lambda_b: Vec<f64>,
    /// Per-predictor slab precisions, used only by the point-mass baseline.
    pub lambda_slab: Vec<f64>,
    pub tau: f64,
    pub alpha: f64,
    pub iteration: usize,
}

impl ModelState {
    /// Number of non-null clusters.
    pub fn n_clusters(&self) -> usize {
        self.lambda_b.len()
    }

    /// Number of predictors outside the null cluster.
    pub fn n_nonnull(&self) -> usize {
        self.labels.iter().filter(|&&c| c != 0).count()
    }

    /// Check the label/precision bookkeeping invariants.
    pub fn check_consistency(&self, allow_null: bool) -> Result<()> {
        let k = self.lambda_b.len();
        if self.b.ncols() != k && self.b.ncols() != 0 {
            return Err(Error::Numerical(format!(
                "B has {} columns but there are {k} clusters",
                self.b.ncols()
            )));
        }
        let mut sizes = vec![0usize; k + 1];
        for &c in &self.labels {
            if c > k || (c == 0 && !allow_null) {
                return Err(Error::Numerical(format!("label {c} outside 1..={k}")));
            }
            sizes[c] += 1;
        }
        if sizes[1..].contains(&0) {
            return Err(Error::Numerical("empty cluster present; labels are not compact".into()));
        }
        let positive = |v: &[f64]| v.iter().all(|&l| l > 0.0 && l.is_finite());
        if !positive(&self.lambda_a) || !positive(&self.lambda_b) || !positive(&self.lambda_slab) {
            return Err(Error::Numerical("non-positive smoothing precision".into()));
        }
        if !(self.tau > 0.0 && self.alpha > 0.0) {
            return Err(Error::Numerical("non-positive tau or alpha".into()));
        }
        Ok(())
    }

    /// `T x P_c` clusterable coefficient curves `Theta B C'`, zero for null members.
    pub fn clustered_curves(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        let mut curves = DMatrix::zeros(theta.nrows(), self.labels.len());
        if self.b.ncols() == 0 {
            return curves;
        }
        let cluster_curves = theta * &self.b;
        for (p, &c) in self.labels.iter().enumerate() {
            if c > 0 {
                curves.set_column(p, &cluster_curves.column(c - 1));
            }
        }
        curves
    }

    /// `T x P_f` free-effect curves `Theta A`.
    pub fn free_curves(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        theta * &self.a
    }
}

/// `P_c x K` indicator matrix with a single one per row at column `labels[p] - 1`.
pub fn one_hot(labels: &[usize], k: usize) -> Result<DMatrix<f64>> {
    let mut c = DMatrix::zeros(labels.len(), k);
    for (p, &label) in labels.iter().enumerate() {
        if label == 0 || label > k {
            return Err(Error::InvalidInput(format!(
                "label {label} of predictor {p} outside 1..={k}"
            )));
        }
        c[(p, label - 1)] = 1.0;
    }
    Ok(c)
}

/// Inverse of [`one_hot`]: the 1-based column holding each row's one.
pub fn labels_from_one_hot(c: &DMatrix<f64>) -> Result<Vec<usize>> {
    c.row_iter()
        .enumerate()
        .map(|(p, row)| {
            let ones: Vec<usize> = row.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(k, _)| k).collect();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones.len() == 1 && zeros + 1 == row.len() {
                Ok(ones[0] + 1)
            } else {
                Err(Error::InvalidInput(format!("row {p} is not one-hot")))
            }
        })
        .collect()
}

/// Kronecker product `a kron b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
            }
        }
    }
    out
}

/// Dense `(X C) kron Theta`, the `NT x MK` design of the cluster coefficients.
pub fn assemble_design(x: &DMatrix<f64>, c: &DMatrix<f64>, theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != c.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} columns but C has {} rows",
            x.ncols(),
            c.nrows()
        )));
    }
    Ok(kron(&(x * c), theta))
}

/// Column-stacked residual `vec(Y' - Theta A W')` after removing free effects.
pub fn residual_free(
    y: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    a: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if theta.ncols() != a.nrows() || a.ncols() != w.ncols() || y.nrows() != w.nrows() || y.ncols() != theta.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Y {:?}, Theta {:?}, A {:?}, W {:?}",
            y.shape(),
            theta.shape(),
            a.shape(),
            w.shape()
        )));
    }
    let resid = y.transpose() - theta * a * w.transpose();
    Ok(DVector::from_column_slice(resid.as_slice()))
}

/// Relabel so the non-null labels are `1..=K` in order of first appearance of
/// their old value in `order`; returns the old label of each new cluster.
pub(crate) fn compact_labels(labels: &mut [usize]) -> Vec<usize> {
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut map = vec![0usize; max + 1];
    let mut old_of_new = Vec::new();
    for label in labels.iter_mut() {
        if *label == 0 {
            continue;
        }
        if map[*label] == 0 {
            old_of_new.push(*label);
            map[*label] = old_of_new.len();
        }
        *label = map[*label];
    }
    old_of_new
}
