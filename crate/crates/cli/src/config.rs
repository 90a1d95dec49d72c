//! Flat JSON config files and their merge with command-line flags.
//!
//! Keys are the long flag names, e.g. `{"variant": "fosr-dp", "iters": 5000,
//! "lambda-shape": 0.01}`. A flag given on the command line replaces the
//! file value.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fosr_core::io::DatasetPaths;
use fosr_core::model::GammaPrior;
use fosr_core::simulation::SimulationSpec;
use fosr_core::study::StudyConfig;
use fosr_core::{PriorConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::args::{FitArgs, PriorArgs, SimulateArgs, StudyArgs};

pub const WORKERS_ENV: &str = "FOSR_WORKERS";
pub const DEFAULT_ITERS: usize = 5000;
pub const DEFAULT_BURNIN: usize = 2500;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub design: Option<u8>,
    pub n: Option<usize>,
    pub n_grid: Option<usize>,
    pub snr: Option<f64>,
    pub data: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub x: Option<PathBuf>,
    pub w: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub variant: Option<Variant>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub seed: Option<u64>,
    pub no_intercept: Option<bool>,
    pub standardize: Option<bool>,
    pub parallel_candidates: Option<bool>,
    pub n_basis: Option<usize>,
    pub eta: Option<f64>,
    pub degree: Option<usize>,
    pub lambda_shape: Option<f64>,
    pub lambda_rate: Option<f64>,
    pub tau_shape: Option<f64>,
    pub tau_rate: Option<f64>,
    pub alpha_shape: Option<f64>,
    pub alpha_rate: Option<f64>,
    pub alpha0: Option<f64>,
    pub designs: Option<Vec<u8>>,
    pub sizes: Option<Vec<usize>>,
    pub variants: Option<Vec<Variant>>,
    pub replicates: Option<usize>,
    pub workers: Option<usize>,
    pub bootstrap_reps: Option<usize>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: Self =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.data,
            &mut config.y,
            &mut config.x,
            &mut config.w,
            &mut config.grid,
            &mut config.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    match value {
        Some(v) => Ok(v),
        None => bail!("missing --{flag} (flag or config key)"),
    }
}

fn resolve_prior(variant: Variant, flags: &PriorArgs, file: &FileConfig) -> PriorConfig {
    let d = PriorConfig::new(variant);
    let gamma = |shape: Option<f64>, fshape: Option<f64>, rate: Option<f64>, frate: Option<f64>, def: GammaPrior| {
        GammaPrior::new(shape.or(fshape).unwrap_or(def.shape), rate.or(frate).unwrap_or(def.rate))
    };
    PriorConfig {
        variant,
        lambda: gamma(flags.lambda_shape, file.lambda_shape, flags.lambda_rate, file.lambda_rate, d.lambda),
        tau: gamma(flags.tau_shape, file.tau_shape, flags.tau_rate, file.tau_rate, d.tau),
        alpha: gamma(flags.alpha_shape, file.alpha_shape, flags.alpha_rate, file.alpha_rate, d.alpha),
        alpha0: flags.alpha0.or(file.alpha0).unwrap_or(d.alpha0),
        n_basis: flags.n_basis.or(file.n_basis).unwrap_or(d.n_basis),
        eta: flags.eta.or(file.eta).unwrap_or(d.eta),
        degree: flags.degree.or(file.degree).unwrap_or(d.degree),
    }
}

pub fn resolve_simulate(args: &SimulateArgs) -> Result<(SimulationSpec, PathBuf)> {
    let file = FileConfig::load(args.config.as_deref())?;
    let design = required(args.design.or(file.design), "design")?;
    let n = required(args.n.or(file.n), "n")?;
    let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let mut spec = SimulationSpec::new(design, n, seed);
    if let Some(t) = args.n_grid.or(file.n_grid) {
        spec.n_grid = t;
    }
    if let Some(snr) = args.snr.or(file.snr) {
        spec.target_snr = snr;
    }
    spec.validate()?;
    let out = required(args.out.clone().or(file.out), "out")?;
    Ok((spec, out))
}

/// Fully resolved inputs of `fit`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub prior: PriorConfig,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub intercept: bool,
    pub standardize: bool,
    pub parallel_candidates: bool,
    pub y: PathBuf,
    pub x: PathBuf,
    pub w: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn dataset_paths(&self) -> DatasetPaths {
        DatasetPaths {
            y: self.y.clone(),
            x: self.x.clone(),
            w: self.w.clone(),
            grid: self.grid.clone(),
        }
    }
}

pub fn resolve_fit(args: &FitArgs) -> Result<RunConfig> {
    let file = FileConfig::load(args.config.as_deref())?;
    let data_dir = args.data.clone().or(file.data.clone());
    let from_dir = data_dir.as_deref().map(DatasetPaths::in_dir);
    let y = args
        .y
        .clone()
        .or(file.y.clone())
        .or(from_dir.as_ref().map(|d| d.y.clone()));
    let x = args
        .x
        .clone()
        .or(file.x.clone())
        .or(from_dir.as_ref().map(|d| d.x.clone()));
    let w = args
        .w
        .clone()
        .or(file.w.clone())
        .or(from_dir.as_ref().and_then(|d| d.w.clone()));
    let grid = args
        .grid
        .clone()
        .or(file.grid.clone())
        .or(from_dir.as_ref().and_then(|d| d.grid.clone()));
    let y = required(y, "y (or --data)")?;
    let x = required(x, "x (or --data)")?;

    let variant = args.variant.or(file.variant).unwrap_or(Variant::FosrDp);
    let standardize = if args.standardize {
        true
    } else if args.no_standardize {
        false
    } else {
        file.standardize.unwrap_or(true)
    };
    let config = RunConfig {
        prior: resolve_prior(variant, &args.prior, &file),
        iterations: args.iters.or(file.iters).unwrap_or(DEFAULT_ITERS),
        burn_in: args.burnin.or(file.burnin).unwrap_or(DEFAULT_BURNIN),
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        intercept: !(args.no_intercept || file.no_intercept.unwrap_or(false)),
        standardize,
        parallel_candidates: args.parallel_candidates || file.parallel_candidates.unwrap_or(false),
        y,
        x,
        w,
        grid,
        out: required(args.out.clone().or(file.out), "out")?,
    };
    if config.iterations <= config.burn_in {
        bail!(
            "--iters ({}) must exceed --burnin ({})",
            config.iterations,
            config.burn_in
        );
    }
    config.prior.validate()?;
    Ok(config)
}

fn env_workers() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            let n = v
                .trim()
                .parse()
                .with_context(|| format!("{WORKERS_ENV}={v:?} is not a worker count"))?;
            Ok(Some(n))
        }
        _ => Ok(None),
    }
}

pub fn resolve_study(args: &StudyArgs) -> Result<(StudyConfig, PathBuf)> {
    let file = FileConfig::load(args.config.as_deref())?;
    let designs = args.designs.clone().or(file.designs.clone()).unwrap_or_else(|| vec![1, 2, 3, 4]);
    let sizes = args
        .sizes
        .clone()
        .or(file.sizes.clone())
        .unwrap_or_else(|| vec![30, 60, 120, 240]);
    let variants = args
        .variants
        .clone()
        .or(file.variants.clone())
        .unwrap_or_else(|| Variant::ALL.to_vec());
    let replicates = args.replicates.or(file.replicates).unwrap_or(20);
    let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let mut config = StudyConfig::new(designs, sizes, variants, replicates, seed);
    config.iterations = args.iters.or(file.iters).unwrap_or(DEFAULT_ITERS);
    config.burn_in = args.burnin.or(file.burnin).unwrap_or(DEFAULT_BURNIN);
    config.workers = match args.workers.or(file.workers) {
        Some(w) => w,
        None => env_workers()?.unwrap_or(1),
    };
    config.bootstrap_reps = args.bootstrap_reps.or(file.bootstrap_reps).unwrap_or(100);
    config.prior = resolve_prior(Variant::Fosr, &args.prior, &file);
    config.validate()?;
    let out = required(args.out.clone().or(file.out), "out")?;
    Ok((config, out))
}
