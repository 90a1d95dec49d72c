//! Joint-distribution test of the Gibbs sampler.
//!
//! Moments of a few scalar summaries are compared between independent draws
//! from the prior (the marginal-conditional simulator) and a chain that
//! alternates one Gibbs sweep with regenerating the data from the current
//! parameters (the successive-conditional simulator). A correct sampler
//! leaves the prior invariant, so the two sets of moments agree.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::Serialize;

use crate::basis::{unit_grid, BasisSystem};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, sample_gaussian_canonical};
use crate::model::{FunctionalDataset, GammaPrior, ModelState, PriorConfig, Variant};
use crate::sampler::{dp_prior_weights, draw_prior, GibbsSampler};
use crate::seeding::{chain_rng, derive_seed, ChainRng};

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeConfig {
    pub prior: PriorConfig,
    pub n_subjects: usize,
    pub n_grid: usize,
    pub n_free: usize,
    pub n_clust: usize,
    pub samples: usize,
    /// Batches used for the successive-conditional standard errors.
    pub batches: usize,
    pub seed: u64,
}

impl GewekeConfig {
    /// A tiny problem with proper, moderately informative hyperparameters.
    pub fn small(variant: Variant, samples: usize, seed: u64) -> Self {
        Self {
            prior: PriorConfig {
                lambda: GammaPrior::new(3.0, 3.0),
                tau: GammaPrior::new(3.0, 3.0),
                alpha: GammaPrior::new(2.0, 2.0),
                alpha0: 2.0,
                n_basis: 4,
                eta: 0.1,
                ..PriorConfig::new(variant)
            },
            n_subjects: 8,
            n_grid: 6,
            n_free: 1,
            n_clust: 4,
            samples,
            batches: 50,
            seed,
        }
    }
}

/// Moment comparison for one summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GewekeStatistic {
    pub name: String,
    pub prior_mean: f64,
    pub chain_mean: f64,
    pub z: f64,
}

/// Everything needed to simulate data, fixed across both simulators.
struct Fixture {
    basis: BasisSystem,
    w: DMatrix<f64>,
    x: DMatrix<f64>,
    grid: Vec<f64>,
}

impl Fixture {
    fn new(config: &GewekeConfig, rng: &mut ChainRng) -> Result<Self> {
        let grid = unit_grid(config.n_grid);
        let p = &config.prior;
        let basis = BasisSystem::new(&grid, p.n_basis, p.degree, p.eta)?;
        let mut w = DMatrix::from_fn(config.n_subjects, config.n_free, |_, _| rng.sample(StandardNormal));
        w.column_mut(0).fill(1.0);
        let x = DMatrix::from_fn(config.n_subjects, config.n_clust, |_, _| rng.sample(StandardNormal));
        Ok(Self { basis, w, x, grid })
    }

    fn coefficient<R: Rng + ?Sized>(&self, lambda: f64, rng: &mut R) -> Result<DVector<f64>> {
        let chol = cholesky(self.basis.penalty() * lambda, "prior precision")?;
        Ok(sample_gaussian_canonical(&chol, &DVector::zeros(self.basis.n_basis()), rng))
    }

    fn simulate_data<R: Rng + ?Sized>(&self, state: &ModelState, rng: &mut R) -> Result<FunctionalDataset> {
        let theta = self.basis.theta();
        let mean = &self.w * state.free_curves(theta).transpose() + &self.x * state.clustered_curves(theta).transpose();
        let sd = state.tau.sqrt().recip();
        let y = mean.map(|m| m + sd * rng.sample::<f64, _>(StandardNormal));
        FunctionalDataset::new(y, self.w.clone(), self.x.clone(), self.grid.clone())
    }
}

/// Chinese-restaurant labels for `n` items in first-appearance order.
fn crp_labels<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Vec<usize> {
    let mut labels = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::new();
    for _ in 0..n {
        let w = dp_prior_weights(&counts, alpha);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = w.len() - 1;
        for (k, p) in w.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = k;
                break;
            }
        }
        if pick == counts.len() {
            counts.push(0);
        }
        counts[pick] += 1;
        labels.push(pick + 1);
    }
    labels
}

/// One draw of every parameter from the prior.
fn prior_state<R: Rng + ?Sized>(config: &GewekeConfig, fixture: &Fixture, rng: &mut R) -> Result<ModelState> {
    let p = &config.prior;
    let m = p.n_basis;
    let p_c = config.n_clust;
    let tau = draw_prior(p.tau, rng)?;
    let lambda_a: Vec<f64> = (0..config.n_free).map(|_| draw_prior(p.lambda, rng)).collect::<Result<_>>()?;
    let mut a = DMatrix::zeros(m, config.n_free);
    for (j, &lam) in lambda_a.iter().enumerate() {
        a.set_column(j, &fixture.coefficient(lam, rng)?);
    }

    let mut alpha = 1.0;
    let mut lambda_slab = Vec::new();
    let labels: Vec<usize> = match p.variant {
        Variant::Fosr => (1..=p_c).collect(),
        Variant::FosrDp => {
            alpha = draw_prior(p.alpha, rng)?;
            crp_labels(p_c, alpha, rng)
        }
        Variant::FosrDppm | Variant::FosrPm => {
            let half = 0.5 * p.alpha0;
            let beta = Beta::new(half, half).map_err(|e| Error::Numerical(e.to_string()))?;
            let pi0 = beta.sample(rng);
            let included: Vec<bool> = (0..p_c).map(|_| rng.random::<f64>() >= pi0).collect();
            if p.variant == Variant::FosrDppm {
                alpha = draw_prior(p.alpha, rng)?;
                let n_nz = included.iter().filter(|&&b| b).count();
                let mut inner = crp_labels(n_nz, alpha, rng).into_iter();
                included.iter().map(|&b| if b { inner.next().unwrap() } else { 0 }).collect()
            } else {
                lambda_slab = (0..p_c).map(|_| draw_prior(p.lambda, rng)).collect::<Result<_>>()?;
                let mut k = 0;
                included
                    .iter()
                    .map(|&b| {
                        if b {
                            k += 1;
                            k
                        } else {
                            0
                        }
                    })
                    .collect()
            }
        }
    };
    let k = labels.iter().copied().max().unwrap_or(0);
    let lambda_b: Vec<f64> = if p.variant == Variant::FosrPm {
        labels
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| lambda_slab[i])
            .collect()
    } else {
        (0..k).map(|_| draw_prior(p.lambda, rng)).collect::<Result<_>>()?
    };
    let mut b = DMatrix::zeros(m, k);
    for (j, &lam) in lambda_b.iter().enumerate() {
        b.set_column(j, &fixture.coefficient(lam, rng)?);
    }
    Ok(ModelState {
        a,
        b,
        labels,
        lambda_a,
        lambda_b,
        lambda_slab,
        tau,
        alpha,
        iteration: 0,
    })
}

fn summaries(state: &ModelState, theta: &DMatrix<f64>, variant: Variant) -> Vec<(&'static str, f64)> {
    let beta = state.clustered_curves(theta)[(0, 0)];
    let mut out = vec![
        ("tau", state.tau),
        ("n_clusters", state.n_clusters() as f64),
        ("beta_1(t_1)", beta),
        ("beta_1(t_1)^2", beta * beta),
        ("alpha_1(t_1)", state.free_curves(theta)[(0, 0)]),
    ];
    if variant.has_concentration() {
        out.push(("alpha", state.alpha));
    }
    out
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn batch_mean_and_se(values: &[f64], batches: usize) -> (f64, f64) {
    let size = values.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (mean, se) = mean_and_se(&means);
    (mean, se)
}

/// Run both simulators and return one z-score per summary.
pub fn geweke_test(config: &GewekeConfig) -> Result<Vec<GewekeStatistic>> {
    config.prior.validate()?;
    if config.n_free == 0 || config.n_clust == 0 {
        return Err(Error::InvalidInput("need at least one free and one clusterable predictor".into()));
    }
    if config.batches < 2 || config.samples < 10 * config.batches {
        return Err(Error::InvalidInput(format!(
            "{} samples are too few for {} batches",
            config.samples, config.batches
        )));
    }
    let mut rng = chain_rng(derive_seed(config.seed, &[0]));
    let fixture = Fixture::new(config, &mut rng)?;
    let theta = fixture.basis.theta();
    let variant = config.prior.variant;

    let mut prior_rng = chain_rng(derive_seed(config.seed, &[1]));
    let mut prior_draws: Vec<Vec<f64>> = Vec::new();
    for _ in 0..config.samples {
        let state = prior_state(config, &fixture, &mut prior_rng)?;
        prior_draws.push(summaries(&state, theta, variant).into_iter().map(|(_, v)| v).collect());
    }

    let mut chain_rng_ = chain_rng(derive_seed(config.seed, &[2]));
    let mut state = prior_state(config, &fixture, &mut chain_rng_)?;
    let mut chain_draws: Vec<Vec<f64>> = Vec::new();
    for _ in 0..config.samples {
        let data = fixture.simulate_data(&state, &mut chain_rng_)?;
        let sampler = GibbsSampler::new(&data, &fixture.basis, config.prior.clone())?;
        sampler.sweep(&mut state, &mut chain_rng_)?;
        chain_draws.push(summaries(&state, theta, variant).into_iter().map(|(_, v)| v).collect());
    }

    let names: Vec<&str> = summaries(&state, theta, variant).into_iter().map(|(n, _)| n).collect();
    Ok(names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let a: Vec<f64> = prior_draws.iter().map(|d| d[j]).collect();
            let b: Vec<f64> = chain_draws.iter().map(|d| d[j]).collect();
            let (ma, sa) = mean_and_se(&a);
            let (mb, sb) = batch_mean_and_se(&b, config.batches);
            let denom = (sa * sa + sb * sb).sqrt();
            let z = if denom > 0.0 { (ma - mb) / denom } else { 0.0 };
            GewekeStatistic {
                name: name.to_string(),
                prior_mean: ma,
                chain_mean: mb,
                z,
            }
        })
        .collect())
}
