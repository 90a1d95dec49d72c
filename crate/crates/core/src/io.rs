//! Dataset and truth files.
//!
//! `Y.csv` has one row per subject and one column per grid point, with the
//! grid values as its header. `X.csv` and `W.csv` have one row per subject
//! and predictor names as headers. `W.csv` never holds the intercept; readers
//! prepend it unless told otherwise. `grid.csv` repeats the grid as a single
//! column `t`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::FunctionalDataset;
use crate::sampler::chain::{fmt_f64, write_table};
use crate::simulation::SimulatedTruth;

pub const INTERCEPT_NAME: &str = "intercept";

/// Locations of the dataset files. `w` and `grid` are optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub y: PathBuf,
    pub x: PathBuf,
    pub w: Option<PathBuf>,
    pub grid: Option<PathBuf>,
}

impl DatasetPaths {
    /// The standard file names inside `dir`, using `W.csv` and `grid.csv`
    /// when present.
    pub fn in_dir(dir: &Path) -> Self {
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self {
            y: dir.join("Y.csv"),
            x: dir.join("X.csv"),
            w: optional("W.csv"),
            grid: optional("grid.csv"),
        }
    }
}

/// A numeric table with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Read a headed CSV of numbers. Every row must have as many fields as the
/// header.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let schema = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(schema("missing header row".into()));
    }
    let ncols = header.len();
    let mut data = Vec::new();
    let mut nrows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if record.len() != ncols {
            return Err(schema(format!(
                "data row {} has {} fields but the header has {ncols} columns",
                r + 1,
                record.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                schema(format!(
                    "data row {}, column {} ({}): cannot parse {field:?} as a number",
                    r + 1,
                    c + 1,
                    header[c]
                ))
            })?;
            data.push(v);
        }
        nrows += 1;
    }
    Ok(Table {
        header,
        values: DMatrix::from_row_slice(nrows, ncols, &data),
    })
}

fn matrix_rows(m: &DMatrix<f64>, skip_first: bool) -> Vec<Vec<String>> {
    let start = usize::from(skip_first);
    (0..m.nrows())
        .map(|i| (start..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect())
        .collect()
}

fn has_intercept(data: &FunctionalDataset) -> bool {
    data.free_names().first().map(String::as_str) == Some(INTERCEPT_NAME)
        && data.w().column(0).iter().all(|&v| v == 1.0)
}

/// Write `Y.csv`, `X.csv`, `W.csv` and `grid.csv` into `dir`. A leading
/// intercept column of `W` is left out. Returns the paths written.
pub fn write_dataset(dir: &Path, data: &FunctionalDataset) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("Y.csv");
    let header: Vec<String> = data.grid().iter().map(|&t| fmt_f64(t)).collect();
    write_table(&path, &header, &matrix_rows(data.y(), false))?;
    written.push(path);

    let path = dir.join("X.csv");
    write_table(&path, data.clust_names(), &matrix_rows(data.x(), false))?;
    written.push(path);

    let skip = has_intercept(data);
    let names = &data.free_names()[usize::from(skip)..];
    if !names.is_empty() {
        let path = dir.join("W.csv");
        write_table(&path, names, &matrix_rows(data.w(), skip))?;
        written.push(path);
    }

    let path = dir.join("grid.csv");
    let rows: Vec<Vec<String>> = data.grid().iter().map(|&t| vec![fmt_f64(t)]).collect();
    write_table(&path, &["t".to_string()], &rows)?;
    written.push(path);
    Ok(written)
}

fn schema_err(path: &Path, message: String) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        message,
    }
}

/// Read a dataset. With `intercept` set, an all-ones column named
/// `intercept` is prepended to `W`.
pub fn read_dataset(paths: &DatasetPaths, intercept: bool) -> Result<FunctionalDataset> {
    let y = read_table(&paths.y)?;
    let mut grid = Vec::with_capacity(y.header.len());
    for (c, h) in y.header.iter().enumerate() {
        let t: f64 = h.parse().map_err(|_| {
            schema_err(
                &paths.y,
                format!("header column {} ({h:?}) is not a grid value", c + 1),
            )
        })?;
        grid.push(t);
    }
    let n = y.values.nrows();

    if let Some(gp) = &paths.grid {
        let g = read_table(gp)?;
        if g.values.ncols() != 1 || g.values.nrows() != grid.len() {
            return Err(schema_err(
                gp,
                format!(
                    "expected 1 column and {} rows to match Y, found {} columns and {} rows",
                    grid.len(),
                    g.values.ncols(),
                    g.values.nrows()
                ),
            ));
        }
        if g.values.iter().zip(&grid).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs())) {
            return Err(schema_err(gp, "grid values disagree with the header of Y".into()));
        }
    }

    let x = read_table(&paths.x)?;
    if x.values.nrows() != n {
        return Err(schema_err(
            &paths.x,
            format!("has {} data rows but Y has {n}", x.values.nrows()),
        ));
    }

    let (w_vals, w_names) = match &paths.w {
        Some(wp) => {
            let w = read_table(wp)?;
            if w.values.nrows() != n {
                return Err(schema_err(wp, format!("has {} data rows but Y has {n}", w.values.nrows())));
            }
            (w.values, w.header)
        }
        None => (DMatrix::zeros(n, 0), Vec::new()),
    };
    let (w, free_names) = if intercept {
        let mut full = DMatrix::from_element(n, w_vals.ncols() + 1, 1.0);
        full.columns_mut(1, w_vals.ncols()).copy_from(&w_vals);
        let names = std::iter::once(INTERCEPT_NAME.to_string()).chain(w_names).collect();
        (full, names)
    } else {
        (w_vals, w_names)
    };
    FunctionalDataset::with_names(y.values, w, x.values, grid, free_names, x.header)
}

/// Column centering and scaling applied by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardization {
    pub free_means: Vec<f64>,
    pub free_scales: Vec<f64>,
    pub clust_means: Vec<f64>,
    pub clust_scales: Vec<f64>,
}

fn standardize_columns(m: &DMatrix<f64>, skip: impl Fn(usize) -> bool) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    let mut means = Vec::with_capacity(m.ncols());
    let mut scales = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let col = m.column(j);
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        if skip(j) || sd == 0.0 {
            means.push(0.0);
            scales.push(1.0);
            continue;
        }
        out.column_mut(j).apply(|v| *v = (*v - mean) / sd);
        means.push(mean);
        scales.push(sd);
    }
    (out, means, scales)
}

/// Center and scale every column of `X` and `W` to unit sample standard
/// deviation. The intercept and constant columns are left unchanged.
pub fn standardize(data: &FunctionalDataset) -> Result<(FunctionalDataset, Standardization)> {
    let intercept = has_intercept(data);
    let (w, free_means, free_scales) = standardize_columns(data.w(), |j| intercept && j == 0);
    let (x, clust_means, clust_scales) = standardize_columns(data.x(), |_| false);
    let out = FunctionalDataset::with_names(
        data.y().clone(),
        w,
        x,
        data.grid().to_vec(),
        data.free_names().to_vec(),
        data.clust_names().to_vec(),
    )?;
    Ok((
        out,
        Standardization {
            free_means,
            free_scales,
            clust_means,
            clust_scales,
        },
    ))
}

#[derive(Serialize)]
struct TruthMeta<'a> {
    sigma2: f64,
    labels: &'a [usize],
}

/// Write the true curves (`truth_beta.csv`, `truth_alpha.csv`, one row per
/// grid point), true labels and the nugget variance.
pub fn write_truth(dir: &Path, data: &FunctionalDataset, truth: &SimulatedTruth) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let curves = |names: &[String], m: &DMatrix<f64>| -> (Vec<String>, Vec<Vec<String>>) {
        let header = std::iter::once("t".to_string()).chain(names.iter().cloned()).collect();
        let rows = data
            .grid()
            .iter()
            .enumerate()
            .map(|(i, &t)| std::iter::once(fmt_f64(t)).chain(m.row(i).iter().map(|v| fmt_f64(*v))).collect())
            .collect();
        (header, rows)
    };

    let path = dir.join("truth_beta.csv");
    let (h, r) = curves(data.clust_names(), &truth.beta);
    write_table(&path, &h, &r)?;
    written.push(path);

    let path = dir.join("truth_alpha.csv");
    let (h, r) = curves(data.free_names(), &truth.alpha);
    write_table(&path, &h, &r)?;
    written.push(path);

    let path = dir.join("truth_labels.csv");
    let rows: Vec<Vec<String>> = data
        .clust_names()
        .iter()
        .zip(&truth.labels)
        .map(|(n, l)| vec![n.clone(), l.to_string()])
        .collect();
    write_table(&path, &["predictor".to_string(), "label".to_string()], &rows)?;
    written.push(path);

    let path = dir.join("truth.json");
    let meta = TruthMeta {
        sigma2: truth.sigma2,
        labels: &truth.labels,
    };
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}
