use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fosr_core::Variant;

#[derive(Debug, Parser)]
#[command(name = "fosr", version, about = "Bayesian function-on-scalar regression with selection and clustering priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one simulated dataset with its truth files.
    Simulate(SimulateArgs),
    /// Fit one chain to a dataset and write draws and summaries.
    Fit(FitArgs),
    /// Run the replicated simulation study and write aggregated tables.
    Study(StudyArgs),
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: fosr_core::Error| e.to_string())
}

/// Hyperparameter flags shared by `fit` and `study`.
#[derive(Debug, Clone, Default, Args)]
pub struct PriorArgs {
    /// Number of B-spline basis functions per curve.
    #[arg(long)]
    pub n_basis: Option<usize>,
    /// Weight of the identity in the roughness penalty, in (0, 1].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Spline degree.
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub lambda_shape: Option<f64>,
    #[arg(long)]
    pub lambda_rate: Option<f64>,
    #[arg(long)]
    pub tau_shape: Option<f64>,
    #[arg(long)]
    pub tau_rate: Option<f64>,
    #[arg(long)]
    pub alpha_shape: Option<f64>,
    #[arg(long)]
    pub alpha_rate: Option<f64>,
    /// Symmetric Beta weight on the null cluster.
    #[arg(long)]
    pub alpha0: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// JSON file of flag values; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Design 1 to 4.
    #[arg(long)]
    pub design: Option<u8>,
    /// Number of subjects.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid points per curve.
    #[arg(long)]
    pub n_grid: Option<usize>,
    /// Target signal-to-noise ratio.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding Y.csv, X.csv and optionally W.csv and grid.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response file; overrides the one in `--data`.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Clusterable predictors; overrides the one in `--data`.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Free predictors without the intercept; overrides the one in `--data`.
    #[arg(long)]
    pub w: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Do not prepend an intercept column to W.
    #[arg(long)]
    pub no_intercept: bool,
    /// Center and scale X and W columns (the default).
    #[arg(long, overrides_with = "no_standardize")]
    pub standardize: bool,
    /// Use X and W as given.
    #[arg(long, overrides_with = "standardize")]
    pub no_standardize: bool,
    /// Evaluate label-update candidates on all cores.
    #[arg(long)]
    pub parallel_candidates: bool,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated design ids.
    #[arg(long, value_delimiter = ',')]
    pub designs: Option<Vec<u8>>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    pub variants: Option<Vec<Variant>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicate fits run at once; defaults to `FOSR_WORKERS`, then 1.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub bootstrap_reps: Option<usize>,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
