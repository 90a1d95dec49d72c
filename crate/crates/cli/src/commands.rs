use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fosr_core::evaluation::report::{write_curve_summaries, write_merge_tree, write_named_matrix, write_percent_zero_table};
use fosr_core::evaluation::summary::MIN_SUMMARY_DRAWS;
use fosr_core::evaluation::{coclustering_matrix, curve_summary, dendrogram, percent_zero};
use fosr_core::io::{read_dataset, standardize, write_dataset, write_truth};
use fosr_core::simulation::make_design;
use fosr_core::study::run_study;
use fosr_core::{run_chain, ChainOptions, ChainOutput};

use crate::args::{FitArgs, SimulateArgs, StudyArgs};
use crate::config::{resolve_fit, resolve_simulate, resolve_study};

pub const MANIFEST: &str = "manifest.txt";

/// Write `manifest.txt` listing every output relative to `dir`, sorted, and
/// echo it to stdout.
fn finish(dir: &Path, files: Vec<PathBuf>) -> Result<()> {
    let mut names: Vec<String> = files
        .iter()
        .map(|p| p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/"))
        .collect();
    names.push(MANIFEST.to_string());
    names.sort();
    names.dedup();
    let text: String = names.iter().map(|n| format!("{n}\n")).collect();
    let path = dir.join(MANIFEST);
    fs::write(&path, &text).with_context(|| format!("cannot write {}", path.display()))?;
    print!("{text}");
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let (spec, out) = resolve_simulate(args)?;
    let (data, truth) = make_design(&spec)?;
    let mut files = write_dataset(&out, &data)?;
    files.extend(write_truth(&out, &data, &truth)?);
    let path = out.join("simulation.json");
    write_json(&path, &spec)?;
    files.push(path);
    finish(&out, files)
}

fn curve_summaries(output: &ChainOutput) -> Result<Vec<(String, fosr_core::evaluation::CurveSummary)>> {
    let mut curves = Vec::new();
    for (p, name) in output.free_names.iter().enumerate() {
        curves.push((name.clone(), curve_summary(&output.free_curve_draws(p))?));
    }
    for (p, name) in output.clust_names.iter().enumerate() {
        curves.push((name.clone(), curve_summary(&output.clustered_curve_draws(p))?));
    }
    Ok(curves)
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let config = resolve_fit(args)?;
    let out = config.out.clone();
    let raw = read_dataset(&config.dataset_paths(), config.intercept)?;
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut files = Vec::new();

    let data = if config.standardize {
        let (data, scaling) = standardize(&raw)?;
        let path = out.join("standardization.json");
        write_json(&path, &scaling)?;
        files.push(path);
        data
    } else {
        raw
    };
    let path = out.join("run_config.json");
    write_json(&path, &config)?;
    files.push(path);

    let mut options = ChainOptions::new(config.iterations, config.burn_in, config.seed);
    options.parallel_candidates = config.parallel_candidates;
    let started = std::time::Instant::now();
    let output = run_chain(&data, &config.prior, options)?;
    eprintln!(
        "{} draws of {} in {:.1} s",
        output.n_draws(),
        config.prior.variant,
        started.elapsed().as_secs_f64()
    );
    files.extend(output.write_dir(&out.join("chain"))?);

    if output.n_draws() >= MIN_SUMMARY_DRAWS {
        let path = out.join("curve_summaries.csv");
        write_curve_summaries(&path, &output.grid, &curve_summaries(&output)?)?;
        files.push(path);
    } else {
        eprintln!(
            "warning: {} stored draws, curve summaries need {MIN_SUMMARY_DRAWS}; skipped",
            output.n_draws()
        );
    }

    let variant = config.prior.variant;
    if variant.samples_labels() {
        let s = coclustering_matrix(&output.labels)?;
        let path = out.join("coclustering.csv");
        write_named_matrix(&path, &output.clust_names, &s)?;
        files.push(path);
        let path = out.join("dendrogram.csv");
        write_merge_tree(&path, &dendrogram(&s)?)?;
        files.push(path);
    }
    if variant.has_null_cluster() {
        let path = out.join("percent_zero.csv");
        write_percent_zero_table(&path, &output.clust_names, &percent_zero(&output.labels)?)?;
        files.push(path);
    }
    finish(&out, files)
}

pub fn study(args: &StudyArgs) -> Result<()> {
    let (config, out) = resolve_study(args)?;
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let started = std::time::Instant::now();
    let outcome = run_study(&config)?;
    eprintln!(
        "{} fits, {} failed, in {:.1} s",
        outcome.reports.len() + outcome.failures.len(),
        outcome.failures.len(),
        started.elapsed().as_secs_f64()
    );
    for f in &outcome.failures {
        eprintln!(
            "warning: design {} N {} {} replicate {} failed: {}",
            f.job.design, f.job.n_subjects, f.job.variant, f.job.replicate, f.message
        );
    }
    let mut files = outcome.write_dir(&out)?;
    // worker count does not change any output, so it stays out of the record
    let mut recorded = config.clone();
    recorded.workers = 1;
    let path = out.join("config.json");
    write_json(&path, &recorded)?;
    files.push(path);
    finish(&out, files)
}
