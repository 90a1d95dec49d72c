//! Chain driver and the on-disk chain format.
//!
//! A chain directory holds one CSV per tracked quantity (header row, one row
//! per stored iteration, first column `iteration`) and a `run.json` with the
//! seed, variant, iteration counts and hyperparameters.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use super::GibbsSampler;
use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::model::{FunctionalDataset, ModelState, PriorConfig};
use crate::seeding::chain_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainOptions {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Evaluate label-update candidates on the rayon pool.
    pub parallel_candidates: bool,
}

impl ChainOptions {
    pub fn new(iterations: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in,
            seed,
            parallel_candidates: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidInput(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        Ok(())
    }
}

/// Post-burn-in draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub prior: PriorConfig,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub grid: Vec<f64>,
    pub free_names: Vec<String>,
    pub clust_names: Vec<String>,
    /// `T x P_f` free-effect curves per stored draw.
    pub free_curves: Vec<DMatrix<f64>>,
    /// `T x P_c` clusterable curves per stored draw (zero for null members).
    pub clustered_curves: Vec<DMatrix<f64>>,
    pub labels: Vec<Vec<usize>>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lambda_free: Vec<Vec<f64>>,
    /// Smoothing precision of each predictor's cluster; NaN for null members.
    pub lambda_clustered: Vec<Vec<f64>>,
    pub n_clusters: Vec<usize>,
}

impl ChainOutput {
    pub fn n_draws(&self) -> usize {
        self.tau.len()
    }

    fn record(&mut self, state: &ModelState, basis: &BasisSystem) {
        let theta = basis.theta();
        self.free_curves.push(state.free_curves(theta));
        self.clustered_curves.push(state.clustered_curves(theta));
        self.labels.push(state.labels.clone());
        self.tau.push(state.tau);
        self.alpha.push(state.alpha);
        self.lambda_free.push(state.lambda_a.clone());
        self.lambda_clustered.push(
            state
                .labels
                .iter()
                .map(|&c| if c == 0 { f64::NAN } else { state.lambda_b[c - 1] })
                .collect(),
        );
        self.n_clusters.push(state.n_clusters());
    }

    /// Posterior mean of the clusterable curves, `T x P_c`.
    pub fn mean_clustered_curves(&self) -> DMatrix<f64> {
        mean_matrix(&self.clustered_curves)
    }

    /// Posterior mean of the free-effect curves, `T x P_f`.
    pub fn mean_free_curves(&self) -> DMatrix<f64> {
        mean_matrix(&self.free_curves)
    }

    /// Draws of one clusterable curve as `S` rows of length `T`.
    pub fn clustered_curve_draws(&self, predictor: usize) -> Vec<Vec<f64>> {
        self.clustered_curves
            .iter()
            .map(|c| c.column(predictor).iter().copied().collect())
            .collect()
    }

    /// Draws of one free-effect curve as `S` rows of length `T`.
    pub fn free_curve_draws(&self, predictor: usize) -> Vec<Vec<f64>> {
        self.free_curves
            .iter()
            .map(|c| c.column(predictor).iter().copied().collect())
            .collect()
    }

    /// Write the chain files into `dir`; returns the paths written.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let variant = self.prior.variant;
        let iters: Vec<usize> = (self.burn_in..self.iterations).collect();
        let mut written = Vec::new();

        let mut emit = |name: &str, header: Vec<String>, rows: Vec<Vec<String>>| -> Result<()> {
            let path = dir.join(name);
            write_table(&path, &header, &rows)?;
            written.push(path);
            Ok(())
        };
        let with_iter = |cols: Vec<String>| std::iter::once("iteration".to_string()).chain(cols).collect::<Vec<_>>();
        let scalar_rows = |values: &[f64]| -> Vec<Vec<String>> {
            iters.iter().zip(values).map(|(i, v)| vec![i.to_string(), fmt_f64(*v)]).collect()
        };
        let vector_rows = |values: &[Vec<f64>]| -> Vec<Vec<String>> {
            iters
                .iter()
                .zip(values)
                .map(|(i, v)| std::iter::once(i.to_string()).chain(v.iter().map(|x| fmt_f64(*x))).collect())
                .collect()
        };
        let curve_header = |names: &[String]| -> Vec<String> {
            names
                .iter()
                .flat_map(|n| (0..self.grid.len()).map(move |t| format!("{n}_t{t}")))
                .collect()
        };
        let curve_rows = |curves: &[DMatrix<f64>]| -> Vec<Vec<String>> {
            iters
                .iter()
                .zip(curves)
                .map(|(i, c)| std::iter::once(i.to_string()).chain(c.iter().map(|x| fmt_f64(*x))).collect())
                .collect()
        };

        emit("tau.csv", with_iter(vec!["tau".into()]), scalar_rows(&self.tau))?;
        if variant.has_concentration() {
            emit("alpha.csv", with_iter(vec!["alpha".into()]), scalar_rows(&self.alpha))?;
        }
        if variant.samples_labels() {
            let rows = iters
                .iter()
                .zip(&self.labels)
                .map(|(i, l)| std::iter::once(i.to_string()).chain(l.iter().map(|c| c.to_string())).collect())
                .collect();
            emit("labels.csv", with_iter(self.clust_names.clone()), rows)?;
            let rows = iters
                .iter()
                .zip(&self.n_clusters)
                .map(|(i, k)| vec![i.to_string(), k.to_string()])
                .collect();
            emit("n_clusters.csv", with_iter(vec!["n_clusters".into()]), rows)?;
        }
        emit("lambda_free.csv", with_iter(self.free_names.clone()), vector_rows(&self.lambda_free))?;
        emit(
            "lambda_clustered.csv",
            with_iter(self.clust_names.clone()),
            vector_rows(&self.lambda_clustered),
        )?;
        emit("free_curves.csv", with_iter(curve_header(&self.free_names)), curve_rows(&self.free_curves))?;
        emit(
            "clustered_curves.csv",
            with_iter(curve_header(&self.clust_names)),
            curve_rows(&self.clustered_curves),
        )?;

        let meta = RunMetadata {
            seed: self.seed,
            variant: variant.as_str(),
            iterations: self.iterations,
            burn_in: self.burn_in,
            stored_draws: self.n_draws(),
            n_grid: self.grid.len(),
            free_predictors: &self.free_names,
            clusterable_predictors: &self.clust_names,
            prior: &self.prior,
        };
        let path = dir.join("run.json");
        let json = serde_json::to_string_pretty(&meta)?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    seed: u64,
    variant: &'a str,
    iterations: usize,
    burn_in: usize,
    stored_draws: usize,
    n_grid: usize,
    free_predictors: &'a [String],
    clusterable_predictors: &'a [String],
    prior: &'a PriorConfig,
}

fn mean_matrix(draws: &[DMatrix<f64>]) -> DMatrix<f64> {
    let first = &draws[0];
    let mut acc = DMatrix::zeros(first.nrows(), first.ncols());
    for d in draws {
        acc += d;
    }
    acc / draws.len() as f64
}

/// Shortest round-trip decimal form; `NA` for NaN.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

pub(crate) fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{}", header.join(","))?;
        for row in rows {
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Run one chain from the default starting point.
pub fn run_chain(
    data: &FunctionalDataset,
    prior: &PriorConfig,
    options: ChainOptions,
) -> Result<ChainOutput> {
    options.validate()?;
    prior.validate()?;
    let basis = BasisSystem::new(data.grid(), prior.n_basis, prior.degree, prior.eta)?;
    let sampler = GibbsSampler::new(data, &basis, prior.clone())?.with_parallel_candidates(options.parallel_candidates);
    let mut rng = chain_rng(options.seed);
    let mut state = sampler.initial_state();
    let stored = options.iterations - options.burn_in;
    let mut out = ChainOutput {
        prior: prior.clone(),
        seed: options.seed,
        iterations: options.iterations,
        burn_in: options.burn_in,
        grid: data.grid().to_vec(),
        free_names: data.free_names().to_vec(),
        clust_names: data.clust_names().to_vec(),
        free_curves: Vec::with_capacity(stored),
        clustered_curves: Vec::with_capacity(stored),
        labels: Vec::with_capacity(stored),
        tau: Vec::with_capacity(stored),
        alpha: Vec::with_capacity(stored),
        lambda_free: Vec::with_capacity(stored),
        lambda_clustered: Vec::with_capacity(stored),
        n_clusters: Vec::with_capacity(stored),
    };
    for iteration in 0..options.iterations {
        sampler.sweep(&mut state, &mut rng).map_err(|e| Error::ChainAborted {
            iteration,
            source: Box::new(e),
        })?;
        if iteration >= options.burn_in {
            out.record(&state, &basis);
        }
    }
    Ok(out)
}
