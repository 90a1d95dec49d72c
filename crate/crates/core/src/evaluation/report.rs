use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cluster::{coclustering_matrix, least_squares_partition, percent_zero, Merge};
use super::metrics::{adjusted_rand_index, pointwise_mse, rand_index};
use super::summary::CurveSummary;
use crate::error::{Error, Result};
use crate::model::Variant;
use crate::sampler::chain::{fmt_f64, write_table};
use crate::sampler::ChainOutput;
use crate::simulation::SimulatedTruth;

/// Scores of one fitted replicate against its simulated truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub design_id: u8,
    pub n_subjects: usize,
    pub replicate_id: usize,
    pub variant: Variant,
    pub pointwise_mse: f64,
    /// Scores of the least-squares partition; absent for variants that do
    /// not sample labels.
    pub rand: Option<f64>,
    pub adjusted_rand: Option<f64>,
    pub percent_zero: Option<Vec<f64>>,
    #[serde(skip)]
    pub coclustering: Option<DMatrix<f64>>,
}

/// Score a chain. MSE uses the posterior-mean clusterable curves.
pub fn evaluate_chain(
    output: &ChainOutput,
    truth: &SimulatedTruth,
    design_id: u8,
    n_subjects: usize,
    replicate_id: usize,
) -> Result<EvaluationReport> {
    let variant = output.prior.variant;
    let mse = pointwise_mse(&output.mean_clustered_curves(), &truth.beta)?;
    let mut report = EvaluationReport {
        design_id,
        n_subjects,
        replicate_id,
        variant,
        pointwise_mse: mse,
        rand: None,
        adjusted_rand: None,
        percent_zero: None,
        coclustering: None,
    };
    if variant.samples_labels() {
        let point = least_squares_partition(&output.labels)?;
        if truth.labels.len() >= 2 {
            report.rand = Some(rand_index(&point, &truth.labels)?);
            report.adjusted_rand = Some(adjusted_rand_index(&point, &truth.labels)?);
        }
        report.coclustering = Some(coclustering_matrix(&output.labels)?);
    }
    if variant.has_null_cluster() {
        report.percent_zero = Some(percent_zero(&output.labels)?);
    }
    Ok(report)
}

/// Mean and bootstrap standard error of one metric in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Aggregated metrics for one (design, N, variant) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub design_id: u8,
    pub n_subjects: usize,
    pub variant: Variant,
    pub n_replicates: usize,
    pub mse: Estimate,
    pub rand: Option<Estimate>,
    pub adjusted_rand: Option<Estimate>,
}

/// Standard deviation of `reps` nonparametric bootstrap replicates of the
/// sample mean.
pub fn bootstrap_se<R: Rng + ?Sized>(values: &[f64], reps: usize, rng: &mut R) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("bootstrap of an empty sample".into()));
    }
    if reps < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 bootstrap repetitions, got {reps}")));
    }
    let n = values.len();
    let means: Vec<f64> = (0..reps)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    if means.iter().all(|&x| x == means[0]) {
        return Ok(0.0);
    }
    let m = means.iter().sum::<f64>() / reps as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
    Ok(var.sqrt())
}

fn estimate<R: Rng + ?Sized>(values: &[f64], reps: usize, rng: &mut R) -> Result<Estimate> {
    Ok(Estimate {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        se: bootstrap_se(values, reps, rng)?,
    })
}

/// Group reports by (design, N, variant) and summarize each cell. Cells come
/// back sorted by design, then N, then variant order.
pub fn aggregate_study<R: Rng + ?Sized>(
    reports: &[EvaluationReport],
    bootstrap_reps: usize,
    rng: &mut R,
) -> Result<Vec<CellSummary>> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no replicate reports to aggregate".into()));
    }
    let mut cells: BTreeMap<(u8, usize, usize), Vec<&EvaluationReport>> = BTreeMap::new();
    for r in reports {
        let v = Variant::ALL.iter().position(|&v| v == r.variant).unwrap();
        cells.entry((r.design_id, r.n_subjects, v)).or_default().push(r);
    }
    let mut out = Vec::with_capacity(cells.len());
    for ((design_id, n_subjects, v), members) in cells {
        let mse: Vec<f64> = members.iter().map(|r| r.pointwise_mse).collect();
        let rand: Option<Vec<f64>> = members.iter().map(|r| r.rand).collect();
        let ari: Option<Vec<f64>> = members.iter().map(|r| r.adjusted_rand).collect();
        out.push(CellSummary {
            design_id,
            n_subjects,
            variant: Variant::ALL[v],
            n_replicates: members.len(),
            mse: estimate(&mse, bootstrap_reps, rng)?,
            rand: rand.map(|x| estimate(&x, bootstrap_reps, rng)).transpose()?,
            adjusted_rand: ari.map(|x| estimate(&x, bootstrap_reps, rng)).transpose()?,
        });
    }
    Ok(out)
}

fn sorted_sizes(cells: &[CellSummary]) -> Vec<usize> {
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n_subjects).collect();
    ns.sort_unstable();
    ns.dedup();
    ns
}

/// Wide table with one row per (design, variant) and a mean/SE column pair
/// per sample size. Cells missing a value are written as `NA`.
fn wide_rows(
    cells: &[CellSummary],
    pick: impl Fn(&CellSummary) -> Option<Estimate>,
    leading: &[(&str, String)],
) -> (Vec<String>, Vec<Vec<String>>) {
    let ns = sorted_sizes(cells);
    let mut header: Vec<String> = leading.iter().map(|(k, _)| k.to_string()).collect();
    header.extend(["design".to_string(), "variant".to_string()]);
    for n in &ns {
        header.push(format!("mean_N{n}"));
        header.push(format!("se_N{n}"));
    }
    let mut keys: Vec<(u8, usize)> = Vec::new();
    for c in cells {
        if pick(c).is_none() {
            continue;
        }
        let key = (c.design_id, Variant::ALL.iter().position(|&v| v == c.variant).unwrap());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort_unstable();
    let rows = keys
        .iter()
        .map(|&(d, v)| {
            let mut row: Vec<String> = leading.iter().map(|(_, val)| val.clone()).collect();
            row.push(d.to_string());
            row.push(Variant::ALL[v].as_str().to_string());
            for &n in &ns {
                let est = cells
                    .iter()
                    .find(|c| c.design_id == d && c.variant == Variant::ALL[v] && c.n_subjects == n)
                    .and_then(&pick);
                match est {
                    Some(e) => {
                        row.push(fmt_f64(e.mean));
                        row.push(fmt_f64(e.se));
                    }
                    None => {
                        row.push("NA".into());
                        row.push("NA".into());
                    }
                }
            }
            row
        })
        .collect();
    (header, rows)
}

/// Mean pointwise MSE with bootstrap SEs: rows (design, variant), columns N.
pub fn write_mse_table(path: &Path, cells: &[CellSummary]) -> Result<()> {
    let (header, rows) = wide_rows(cells, |c| Some(c.mse), &[]);
    write_table(path, &header, &rows)
}

/// RAND and adjusted RAND blocks for the label-sampling variants, stacked
/// with a leading `metric` column.
pub fn write_clustering_table(path: &Path, cells: &[CellSummary]) -> Result<()> {
    let (header, mut rows) = wide_rows(cells, |c| c.rand, &[("metric", "rand".into())]);
    let (_, ari_rows) = wide_rows(cells, |c| c.adjusted_rand, &[("metric", "adjusted_rand".into())]);
    rows.extend(ari_rows);
    write_table(path, &header, &rows)
}

/// Predictor names with their null frequency, most often included first.
pub fn write_percent_zero_table(path: &Path, names: &[String], percent_zero: &[f64]) -> Result<()> {
    if names.len() != percent_zero.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} names for {} percent-zero values",
            names.len(),
            percent_zero.len()
        )));
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| percent_zero[a].total_cmp(&percent_zero[b]).then(a.cmp(&b)));
    let rows: Vec<Vec<String>> = order
        .iter()
        .map(|&i| vec![names[i].clone(), fmt_f64(percent_zero[i])])
        .collect();
    write_table(path, &["predictor".to_string(), "percent_zero".to_string()], &rows)
}

/// Merge tree as `step,left,right,height,size`.
pub fn write_merge_tree(path: &Path, merges: &[Merge]) -> Result<()> {
    let header: Vec<String> = ["step", "left", "right", "height", "size"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = merges
        .iter()
        .map(|m| {
            vec![
                m.step.to_string(),
                m.left.to_string(),
                m.right.to_string(),
                fmt_f64(m.height),
                m.size.to_string(),
            ]
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Square matrix with predictor names on both margins.
pub fn write_named_matrix(path: &Path, names: &[String], m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != names.len() || m.ncols() != names.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} names for a {}x{} matrix",
            names.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    let header: Vec<String> = std::iter::once("predictor".to_string()).chain(names.iter().cloned()).collect();
    let rows: Vec<Vec<String>> = (0..m.nrows())
        .map(|i| {
            std::iter::once(names[i].clone())
                .chain(m.row(i).iter().map(|v| fmt_f64(*v)))
                .collect()
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Long-format curve summaries: `predictor,t,mean,lower,upper`.
pub fn write_curve_summaries(path: &Path, grid: &[f64], curves: &[(String, CurveSummary)]) -> Result<()> {
    let header: Vec<String> = ["predictor", "t", "mean", "lower", "upper"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for (name, s) in curves {
        if s.mean.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "summary of {name} has {} points for a grid of {}",
                s.mean.len(),
                grid.len()
            )));
        }
        for (j, &t) in grid.iter().enumerate() {
            rows.push(vec![
                name.clone(),
                fmt_f64(t),
                fmt_f64(s.mean[j]),
                fmt_f64(s.lower[j]),
                fmt_f64(s.upper[j]),
            ]);
        }
    }
    write_table(path, &header, &rows)
}

/// One row per replicate report.
pub fn write_replicate_table(path: &Path, reports: &[EvaluationReport]) -> Result<()> {
    let header: Vec<String> = [
        "design",
        "n_subjects",
        "variant",
        "replicate",
        "pointwise_mse",
        "rand",
        "adjusted_rand",
    ]
    .map(String::from)
    .to_vec();
    let opt = |v: Option<f64>| v.map_or("NA".to_string(), fmt_f64);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.design_id.to_string(),
                r.n_subjects.to_string(),
                r.variant.as_str().to_string(),
                r.replicate_id.to_string(),
                fmt_f64(r.pointwise_mse),
                opt(r.rand),
                opt(r.adjusted_rand),
            ]
        })
        .collect();
    write_table(path, &header, &rows)
}
