//! Command-line front end: `simulate`, `fit` and `study`.

pub mod args;
mod commands;
pub mod config;

pub use args::Cli;
use args::Command;

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Study(a) => commands::study(a),
    }
}
