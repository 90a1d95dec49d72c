//! B-spline evaluation matrices and the full-rank P-spline penalty.
//!
//! Coefficient curves are expanded as `beta(t) = Theta * b`, where `Theta` is
//! the `T x M` matrix of B-spline basis functions evaluated on the common grid.
//! Smoothness is induced through the penalty
//!
//! ```text
//! R = eta * I + (1 - eta) * D2' D2
//! ```
//!
//! where `D2` is the `(M - 2) x M` second-difference operator. The identity
//! shift makes `R` full rank so it can serve as a prior precision.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default spline degree (cubic).
pub const DEFAULT_DEGREE: usize = 3;

/// Default identity weight in the penalty mix.
pub const DEFAULT_ETA: f64 = 0.001;

/// B-spline design and penalty shared by every coefficient curve.
#[derive(Debug, Clone)]
pub struct BasisSystem {
    grid: Vec<f64>,
    theta: DMatrix<f64>,
    penalty: DMatrix<f64>,
    eta: f64,
    degree: usize,
    log_det_penalty: f64,
}

impl BasisSystem {
    pub fn new(grid: &[f64], n_basis: usize, degree: usize, eta: f64) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 points, got {}",
                grid.len()
            )));
        }
        let theta = bspline_design(grid, n_basis, degree)?;
        let penalty = pspline_penalty(n_basis, eta)?;
        let chol = penalty.clone().cholesky().ok_or_else(|| {
            Error::Numerical("penalty matrix is not positive definite".into())
        })?;
        let log_det_penalty = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            grid: grid.to_vec(),
            theta,
            penalty,
            eta,
            degree,
            log_det_penalty,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `T x M` basis evaluations.
    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    /// `M x M` penalty `R`.
    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions `M`.
    pub fn n_basis(&self) -> usize {
        self.theta.ncols()
    }

    /// Number of grid points `T`.
    pub fn n_grid(&self) -> usize {
        self.theta.nrows()
    }

    /// `log |R|`, cached at construction.
    pub fn log_det_penalty(&self) -> f64 {
        self.log_det_penalty
    }
}

/// Clamped knot vector with equally spaced interior knots over `[lo, hi]`.
fn clamped_knots(lo: f64, hi: f64, n_basis: usize, degree: usize) -> Vec<f64> {
    let n_interior = n_basis - degree - 1;
    let n_spans = n_interior + 1;
    let mut knots = Vec::with_capacity(n_basis + degree + 1);
    knots.extend(std::iter::repeat_n(lo, degree + 1));
    for j in 1..=n_interior {
        knots.push(lo + (hi - lo) * j as f64 / n_spans as f64);
    }
    knots.extend(std::iter::repeat_n(hi, degree + 1));
    knots
}

/// Evaluate every B-spline basis function of the given degree on `grid`.
///
/// Interior knots are equally spaced between the first and last grid point
/// and the boundary knots are replicated `degree + 1` times, so the basis is
/// a partition of unity on the closed grid range.
pub fn bspline_design(grid: &[f64], n_basis: usize, degree: usize) -> Result<DMatrix<f64>> {
    if n_basis < degree + 1 {
        return Err(Error::InvalidInput(format!(
            "number of basis functions ({n_basis}) must be at least degree + 1 ({})",
            degree + 1
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidInput("grid is empty".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("grid contains non-finite values".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    let lo = grid[0];
    let hi = grid[grid.len() - 1];
    let knots = clamped_knots(lo, hi, n_basis, degree);

    let mut theta = DMatrix::zeros(grid.len(), n_basis);
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    let mut values = vec![0.0; degree + 1];
    for (row, &t) in grid.iter().enumerate() {
        let span = find_span(&knots, n_basis, degree, t);
        // de Boor's triangular scheme for the degree + 1 non-zero functions
        values[0] = 1.0;
        for j in 1..=degree {
            left[j] = t - knots[span + 1 - j];
            right[j] = knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        for (j, &v) in values.iter().enumerate() {
            theta[(row, span - degree + j)] = v.clamp(0.0, 1.0);
        }
    }
    Ok(theta)
}

/// Index `s` with `knots[s] <= t < knots[s + 1]`; the right end of the range
/// is assigned to the last non-degenerate span.
fn find_span(knots: &[f64], n_basis: usize, degree: usize, t: f64) -> usize {
    if t >= knots[n_basis] {
        return n_basis - 1;
    }
    if t <= knots[degree] {
        return degree;
    }
    let (mut low, mut high) = (degree, n_basis);
    let mut mid = (low + high) / 2;
    while t < knots[mid] || t >= knots[mid + 1] {
        if t < knots[mid] {
            high = mid;
        } else {
            low = mid;
        }
        mid = (low + high) / 2;
    }
    mid
}

/// `eta * I + (1 - eta) * D2' D2` for `M` coefficients.
pub fn pspline_penalty(n_basis: usize, eta: f64) -> Result<DMatrix<f64>> {
    if n_basis < 3 {
        return Err(Error::InvalidInput(format!(
            "penalty needs at least 3 basis functions, got {n_basis}"
        )));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidInput(format!("eta must lie in (0, 1], got {eta}")));
    }
    // D2' D2 is pentadiagonal; accumulate one [1, -2, 1] stencil per row of D2.
    let stencil = [1.0, -2.0, 1.0];
    let mut r2 = DMatrix::zeros(n_basis, n_basis);
    for row in 0..n_basis - 2 {
        for (a, &sa) in stencil.iter().enumerate() {
            for (b, &sb) in stencil.iter().enumerate() {
                r2[(row + a, row + b)] += sa * sb;
            }
        }
    }
    let mut penalty = r2 * (1.0 - eta);
    for m in 0..n_basis {
        penalty[(m, m)] += eta;
    }
    Ok(penalty)
}

/// `n` equally spaced points on `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}
