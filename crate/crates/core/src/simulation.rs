//! Synthetic datasets for the four simulation designs.
//!
//! Clusterable predictors are AR(1)-correlated Gaussians, free predictors are
//! iid standard normal (an intercept column is prepended), and true curves are
//! random combinations of three Fourier functions on the grid. Errors are
//! correlated along the grid with a squared-exponential kernel plus a nugget
//! chosen to hit the requested signal-to-noise ratio.
//!
//! | design | clusterable truth                                          |
//! |--------|------------------------------------------------------------|
//! | 1      | three groups (7, 4, 4); the first group is zero            |
//! | 2      | three groups (7, 4, 4); all non-zero                       |
//! | 3      | every curve distinct and non-zero                          |
//! | 4      | every curve distinct; the first seven are zero             |

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::unit_grid;
use crate::error::{Error, Result};
use crate::model::FunctionalDataset;
use crate::seeding::chain_rng;

/// Floor on the calibrated nugget variance.
pub const MIN_NUGGET: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub design: u8,
    pub n_subjects: usize,
    pub n_grid: usize,
    /// Random free predictors; the intercept comes on top of these.
    pub n_free: usize,
    pub n_clust: usize,
    pub rho: f64,
    pub lengthscale: f64,
    pub target_snr: f64,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(design: u8, n_subjects: usize, seed: u64) -> Self {
        Self {
            design,
            n_subjects,
            n_grid: 15,
            n_free: 5,
            n_clust: 15,
            rho: 0.75,
            lengthscale: 10.0,
            target_snr: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.design) {
            return Err(Error::InvalidInput(format!("design must be 1, 2, 3 or 4, got {}", self.design)));
        }
        if self.n_subjects < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 subjects, got {}", self.n_subjects)));
        }
        if self.n_grid < 2 {
            return Err(Error::InvalidInput("need at least 2 grid points".into()));
        }
        if self.n_clust < 3 {
            return Err(Error::InvalidInput("need at least 3 clusterable predictors".into()));
        }
        if !(self.target_snr > 0.0 && self.target_snr.is_finite()) {
            return Err(Error::InvalidInput(format!("target SNR must be positive, got {}", self.target_snr)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidInput(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if !(self.lengthscale >= 0.0) {
            return Err(Error::InvalidInput("lengthscale must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTruth {
    /// `T x P_c` true clusterable curves.
    pub beta: DMatrix<f64>,
    /// `T x P_f` true free curves, intercept first (identically zero).
    pub alpha: DMatrix<f64>,
    /// True labels with `0` for zero curves.
    pub labels: Vec<usize>,
    /// Calibrated nugget variance.
    pub sigma2: f64,
}

/// True label pattern for a design.
pub fn design_labels(design: u8, n_clust: usize) -> Result<Vec<usize>> {
    // (7, 4, 4) for 15 predictors, scaled otherwise
    let first = ((7 * n_clust) as f64 / 15.0).round().max(1.0) as usize;
    let first = first.min(n_clust - 2);
    let second = (n_clust - first).div_ceil(2);
    match design {
        1 | 2 => {
            let offset = if design == 1 { 0 } else { 1 };
            Ok((0..n_clust)
                .map(|p| {
                    let group = if p < first {
                        0
                    } else if p < first + second {
                        1
                    } else {
                        2
                    };
                    group + offset
                })
                .collect())
        }
        3 => Ok((1..=n_clust).collect()),
        4 => Ok((0..n_clust).map(|p| if p < first { 0 } else { p - first + 1 }).collect()),
        other => Err(Error::InvalidInput(format!("design must be 1, 2, 3 or 4, got {other}"))),
    }
}

/// `{1, sin 2 pi t, cos 2 pi t}` on the grid, each column scaled to unit
/// root-mean-square.
pub fn fourier_basis(grid: &[f64]) -> DMatrix<f64> {
    let tau = std::f64::consts::TAU;
    let mut basis = DMatrix::from_fn(grid.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => (tau * grid[i]).sin(),
        _ => (tau * grid[i]).cos(),
    });
    for mut col in basis.column_iter_mut() {
        let rms = (col.norm_squared() / grid.len() as f64).sqrt();
        if rms > 0.0 {
            col /= rms;
        }
    }
    basis
}

/// Squared-exponential covariance `exp(-lengthscale (t_i - t_j)^2)`.
pub fn exponential_covariance(grid: &[f64], lengthscale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(grid.len(), grid.len(), |i, j| (-lengthscale * (grid[i] - grid[j]).powi(2)).exp())
}

/// Nugget variance making `var(signal) / (trace(Sigma' + s2 I) / T)` equal the target.
pub fn calibrate_noise(signal: &DMatrix<f64>, sigma_prime: &DMatrix<f64>, target_snr: f64) -> Result<f64> {
    if !(target_snr > 0.0) {
        return Err(Error::InvalidInput(format!("target SNR must be positive, got {target_snr}")));
    }
    if !sigma_prime.is_square() || sigma_prime.nrows() == 0 {
        return Err(Error::DimensionMismatch("noise covariance must be square".into()));
    }
    let v = population_variance(signal.as_slice());
    if !(v > 0.0) {
        return Err(Error::InvalidInput("signal has zero variance".into()));
    }
    let base = sigma_prime.trace() / sigma_prime.nrows() as f64;
    Ok((v / target_snr - base).max(MIN_NUGGET))
}

pub(crate) fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Symmetric square root factor `F` with `F F' = cov` (eigenvalues clipped at 0).
fn covariance_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = cov.clone().cholesky() {
        return chol.l();
    }
    let eig = cov.clone().symmetric_eigen();
    let mut vecs = eig.eigenvectors;
    for (j, mut col) in vecs.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[j].max(0.0).sqrt();
    }
    vecs
}

fn gaussian_rows<R: Rng>(n: usize, factor: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let d = factor.nrows();
    let z = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (factor * z).transpose()
}

/// Generate one dataset and its truth.
pub fn make_design(spec: &SimulationSpec) -> Result<(FunctionalDataset, SimulatedTruth)> {
    spec.validate()?;
    let mut rng = chain_rng(spec.seed);
    let n = spec.n_subjects;
    let grid = unit_grid(spec.n_grid);

    let x_cov = DMatrix::from_fn(spec.n_clust, spec.n_clust, |p, q| spec.rho.powi((p as i32 - q as i32).abs()));
    let x = gaussian_rows(n, &covariance_factor(&x_cov), &mut rng);

    let mut w = DMatrix::from_element(n, spec.n_free + 1, 1.0);
    for i in 0..n {
        for p in 1..=spec.n_free {
            w[(i, p)] = rng.sample(StandardNormal);
        }
    }

    let fourier = fourier_basis(&grid);
    let random_curve = |rng: &mut crate::seeding::ChainRng| {
        let coef = nalgebra::DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
        &fourier * coef
    };

    let labels = design_labels(spec.design, spec.n_clust)?;
    let n_groups = labels.iter().copied().max().unwrap_or(0);
    let group_curves: Vec<_> = (0..n_groups).map(|_| random_curve(&mut rng)).collect();
    let mut beta = DMatrix::zeros(spec.n_grid, spec.n_clust);
    for (p, &c) in labels.iter().enumerate() {
        if c > 0 {
            beta.set_column(p, &group_curves[c - 1]);
        }
    }
    let mut alpha = DMatrix::zeros(spec.n_grid, spec.n_free + 1);
    for p in 1..=spec.n_free {
        alpha.set_column(p, &random_curve(&mut rng));
    }

    let signal = &w * alpha.transpose() + &x * beta.transpose();
    let sigma_prime = exponential_covariance(&grid, spec.lengthscale);
    let sigma2 = calibrate_noise(&signal, &sigma_prime, spec.target_snr)?;
    let mut noise_cov = sigma_prime;
    for t in 0..spec.n_grid {
        noise_cov[(t, t)] += sigma2;
    }
    let noise = gaussian_rows(n, &covariance_factor(&noise_cov), &mut rng);
    let y = signal + noise;

    let free_names = std::iter::once("intercept".to_string())
        .chain((1..=spec.n_free).map(|p| format!("w{p}")))
        .collect();
    let clust_names = (1..=spec.n_clust).map(|p| format!("x{p}")).collect();
    let data = FunctionalDataset::with_names(y, w, x, grid, free_names, clust_names)?;
    Ok((
        data,
        SimulatedTruth {
            beta,
            alpha,
            labels,
            sigma2,
        },
    ))
}

/// Noise-free part `W alpha' + X beta'` of a simulated dataset.
pub fn signal_of(data: &FunctionalDataset, truth: &SimulatedTruth) -> DMatrix<f64> {
    data.w() * truth.alpha.transpose() + data.x() * truth.beta.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_one_labels() {
        let labels = design_labels(1, 15).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
        assert_eq!(design_labels(2, 15).unwrap(), vec![1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3]);
        assert_eq!(design_labels(4, 15).unwrap()[..8], [0, 0, 0, 0, 0, 0, 0, 1]);
        assert!(design_labels(5, 15).is_err());
    }

    #[test]
    fn design_one_zero_columns_are_exact() {
        let (data, truth) = make_design(&SimulationSpec::new(1, 30, 7)).unwrap();
        assert_eq!(data.y().shape(), (30, 15));
        assert_eq!(data.w().ncols(), 6);
        for p in 0..7 {
            assert!(truth.beta.column(p).iter().all(|&v| v == 0.0));
        }
        // members of one group share a curve
        assert_eq!(truth.beta.column(7), truth.beta.column(10));
        assert_ne!(truth.beta.column(7), truth.beta.column(11));
        assert!(truth.alpha.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn design_three_curves_are_distinct() {
        let (_, truth) = make_design(&SimulationSpec::new(3, 20, 3)).unwrap();
        for p in 0..15 {
            for q in p + 1..15 {
                let diff = (truth.beta.column(p) - truth.beta.column(q)).amax();
                assert!(diff > 0.0);
            }
            assert!(truth.beta.column(p).amax() > 0.0);
        }
    }

    #[test]
    fn design_four_has_seven_zero_curves() {
        let (_, truth) = make_design(&SimulationSpec::new(4, 20, 3)).unwrap();
        for p in 0..15 {
            let zero = truth.beta.column(p).iter().all(|&v| v == 0.0);
            assert_eq!(zero, p < 7);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let spec = SimulationSpec::new(2, 25, 99);
        let (d1, t1) = make_design(&spec).unwrap();
        let (d2, t2) = make_design(&spec).unwrap();
        assert_eq!(d1.y(), d2.y());
        assert_eq!(d1.x(), d2.x());
        assert_eq!(t1, t2);
        let (d3, _) = make_design(&SimulationSpec { seed: 100, ..spec }).unwrap();
        assert_ne!(d1.y(), d3.y());
    }

    #[test]
    fn predictor_correlation_follows_ar1() {
        let (data, _) = make_design(&SimulationSpec::new(1, 100_000, 5)).unwrap();
        let x = data.x();
        let n = x.nrows() as f64;
        let cov = x.column(0).dot(&x.column(2)) / n - x.column(0).mean() * x.column(2).mean();
        assert!((cov - 0.5625).abs() < 0.01, "cov = {cov}");
    }

    #[test]
    fn calibration_arithmetic() {
        let signal = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 3.0, -3.0]);
        let v = population_variance(signal.as_slice());
        assert_eq!(calibrate_noise(&signal, &DMatrix::zeros(2, 2), 1.0).unwrap(), v);
        // variance 2 with trace(Sigma') / T = 0.5
        let signal = DMatrix::from_row_slice(1, 2, &[-2f64.sqrt(), 2f64.sqrt()]);
        let sp = DMatrix::from_diagonal_element(3, 3, 0.5);
        assert!((calibrate_noise(&signal, &sp, 1.0).unwrap() - 1.5).abs() < 1e-12);
        assert!(calibrate_noise(&DMatrix::from_element(2, 2, 4.0), &sp, 1.0).is_err());
        // tiny signal is floored
        let signal = DMatrix::from_row_slice(1, 2, &[-0.1, 0.1]);
        assert_eq!(calibrate_noise(&signal, &sp, 1.0).unwrap(), MIN_NUGGET);
    }

    #[test]
    fn empirical_snr_near_target() {
        let mut ratios = Vec::new();
        for rep in 0..100 {
            let (data, truth) = make_design(&SimulationSpec::new(1 + (rep % 4) as u8, 120, rep)).unwrap();
            let signal = signal_of(&data, &truth);
            let noise = data.y() - &signal;
            ratios.push(population_variance(signal.as_slice()) / population_variance(noise.as_slice()));
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((0.9..=1.1).contains(&mean), "mean SNR {mean}");
        assert!(ratios.iter().all(|r| (0.75..=1.3).contains(r)));
    }

    #[test]
    fn noise_correlation_follows_kernel() {
        let n = 10_000;
        let lag1 = |spec: &SimulationSpec| {
            let (data, truth) = make_design(spec).unwrap();
            let noise = data.y() - signal_of(&data, &truth);
            let (a, b) = (noise.column(4), noise.column(5));
            let (ma, mb) = (a.mean(), b.mean());
            let cov = a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
            let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n as f64;
            let vb = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n as f64;
            (cov / (va * vb).sqrt(), truth.sigma2)
        };
        let dt = 1.0f64 / 14.0;
        let kernel = (-10.0 * dt * dt).exp();
        // nugget floored: correlation is the kernel itself
        let quiet = SimulationSpec {
            target_snr: 1e9,
            ..SimulationSpec::new(1, n, 21)
        };
        let (corr, sigma2) = lag1(&quiet);
        assert_eq!(sigma2, MIN_NUGGET);
        assert!((corr - kernel).abs() < 0.05, "{corr} vs {kernel}");
        // with the nugget the correlation shrinks by 1 / (1 + sigma2)
        let (corr, sigma2) = lag1(&SimulationSpec::new(1, n, 22));
        assert!((corr - kernel / (1.0 + sigma2)).abs() < 0.05);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(make_design(&SimulationSpec::new(5, 30, 1)).is_err());
        assert!(make_design(&SimulationSpec::new(1, 1, 1)).is_err());
        assert!(make_design(&SimulationSpec {
            target_snr: 0.0,
            ..SimulationSpec::new(1, 30, 1)
        })
        .is_err());
    }
}
