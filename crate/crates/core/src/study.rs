//! Replicated simulation study: generate, fit, score and aggregate.
//!
//! Every replicate dataset and chain draws its seed from the master seed and
//! its position in the study grid, so results do not depend on the number of
//! workers or on scheduling order.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::report::{write_clustering_table, write_mse_table, write_replicate_table};
use crate::evaluation::{aggregate_study, evaluate_chain, CellSummary, EvaluationReport};
use crate::model::{PriorConfig, Variant};
use crate::sampler::chain::write_table;
use crate::sampler::{run_chain, ChainOptions};
use crate::seeding::{chain_rng, derive_seed};
use crate::simulation::{make_design, SimulationSpec};

const DATASET_STREAM: u64 = 0;
const CHAIN_STREAM: u64 = 1;
const BOOTSTRAP_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub designs: Vec<u8>,
    pub sizes: Vec<usize>,
    pub variants: Vec<Variant>,
    pub replicates: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub workers: usize,
    pub bootstrap_reps: usize,
    /// Hyperparameters shared by every variant; its `variant` field is ignored.
    pub prior: PriorConfig,
}

impl StudyConfig {
    pub fn new(designs: Vec<u8>, sizes: Vec<usize>, variants: Vec<Variant>, replicates: usize, seed: u64) -> Self {
        Self {
            designs,
            sizes,
            variants,
            replicates,
            iterations: 5000,
            burn_in: 2500,
            seed,
            workers: 1,
            bootstrap_reps: 100,
            prior: PriorConfig::new(Variant::Fosr),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.designs.is_empty() || self.sizes.is_empty() || self.variants.is_empty() {
            return Err(Error::InvalidInput("study needs at least one design, size and variant".into()));
        }
        if self.replicates < 2 {
            return Err(Error::InvalidInput(format!(
                "study needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if self.workers == 0 {
            return Err(Error::InvalidInput("worker count must be at least 1".into()));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidInput(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        for &d in &self.designs {
            SimulationSpec::new(d, self.sizes[0], 0).validate()?;
        }
        self.prior.validate()
    }

    /// Seed of the dataset for one replicate; shared by every variant.
    pub fn dataset_seed(&self, design: u8, n: usize, replicate: usize) -> u64 {
        derive_seed(self.seed, &[DATASET_STREAM, design as u64, n as u64, replicate as u64])
    }

    pub fn chain_seed(&self, design: u8, n: usize, replicate: usize, variant: Variant) -> u64 {
        let v = Variant::ALL.iter().position(|&x| x == variant).unwrap() as u64;
        derive_seed(self.seed, &[CHAIN_STREAM, design as u64, n as u64, replicate as u64, v])
    }
}

/// One fit in the study grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StudyJob {
    pub design: u8,
    pub n_subjects: usize,
    pub replicate: usize,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobFailure {
    pub job: StudyJob,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub reports: Vec<EvaluationReport>,
    pub failures: Vec<JobFailure>,
    pub cells: Vec<CellSummary>,
}

impl StudyOutcome {
    /// Whether any replicate of the cell failed.
    pub fn is_incomplete(&self, design: u8, n_subjects: usize, variant: Variant) -> bool {
        self.failures
            .iter()
            .any(|f| f.job.design == design && f.job.n_subjects == n_subjects && f.job.variant == variant)
    }

    /// Write the aggregated tables, per-replicate scores and failures.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let path = dir.join("replicates.csv");
        write_replicate_table(&path, &self.reports)?;
        written.push(path);
        if !self.cells.is_empty() {
            let path = dir.join("mse_table.csv");
            write_mse_table(&path, &self.cells)?;
            written.push(path);
            if self.cells.iter().any(|c| c.rand.is_some()) {
                let path = dir.join("clustering_table.csv");
                write_clustering_table(&path, &self.cells)?;
                written.push(path);
            }
        }
        let path = dir.join("cells.csv");
        let header: Vec<String> = ["design", "n_subjects", "variant", "replicates", "complete"]
            .map(String::from)
            .to_vec();
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.design_id.to_string(),
                    c.n_subjects.to_string(),
                    c.variant.as_str().to_string(),
                    c.n_replicates.to_string(),
                    (!self.is_incomplete(c.design_id, c.n_subjects, c.variant)).to_string(),
                ]
            })
            .collect();
        write_table(&path, &header, &rows)?;
        written.push(path);
        let path = dir.join("failures.csv");
        let header: Vec<String> = ["design", "n_subjects", "variant", "replicate", "message"]
            .map(String::from)
            .to_vec();
        let rows: Vec<Vec<String>> = self
            .failures
            .iter()
            .map(|f| {
                vec![
                    f.job.design.to_string(),
                    f.job.n_subjects.to_string(),
                    f.job.variant.as_str().to_string(),
                    f.job.replicate.to_string(),
                    format!("\"{}\"", f.message.replace('"', "'")),
                ]
            })
            .collect();
        write_table(&path, &header, &rows)?;
        written.push(path);
        Ok(written)
    }
}

/// All fits in grid order: design, size, replicate, variant.
pub fn study_jobs(config: &StudyConfig) -> Vec<StudyJob> {
    let mut jobs = Vec::new();
    for &design in &config.designs {
        for &n_subjects in &config.sizes {
            for replicate in 0..config.replicates {
                for &variant in &config.variants {
                    jobs.push(StudyJob {
                        design,
                        n_subjects,
                        replicate,
                        variant,
                    });
                }
            }
        }
    }
    jobs
}

/// Generate, fit and score one job.
pub fn run_job(config: &StudyConfig, job: StudyJob) -> Result<EvaluationReport> {
    let spec = SimulationSpec::new(
        job.design,
        job.n_subjects,
        config.dataset_seed(job.design, job.n_subjects, job.replicate),
    );
    let (data, truth) = make_design(&spec)?;
    let prior = PriorConfig {
        variant: job.variant,
        ..config.prior.clone()
    };
    let options = ChainOptions::new(
        config.iterations,
        config.burn_in,
        config.chain_seed(job.design, job.n_subjects, job.replicate, job.variant),
    );
    let output = run_chain(&data, &prior, options)?;
    evaluate_chain(&output, &truth, job.design, job.n_subjects, job.replicate)
}

/// Run every job on a pool of `config.workers` threads. Failed jobs are
/// recorded; their cells are aggregated from the replicates that succeeded.
pub fn run_study(config: &StudyConfig) -> Result<StudyOutcome> {
    config.validate()?;
    let jobs = study_jobs(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<EvaluationReport>> = pool.install(|| jobs.par_iter().map(|&job| run_job(config, job)).collect());

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (job, result) in jobs.into_iter().zip(results) {
        match result {
            Ok(r) => reports.push(r),
            Err(e) => failures.push(JobFailure {
                job,
                message: e.to_string(),
            }),
        }
    }
    let cells = if reports.is_empty() {
        Vec::new()
    } else {
        let mut rng = chain_rng(derive_seed(config.seed, &[BOOTSTRAP_STREAM]));
        aggregate_study(&reports, config.bootstrap_reps, &mut rng)?
    };
    Ok(StudyOutcome {
        reports,
        failures,
        cells,
    })
}
