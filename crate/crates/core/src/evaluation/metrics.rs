use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Mean squared error over every entry of two `T x P` curve matrices.
pub fn pointwise_mse(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(format!(
            "estimate {:?} vs truth {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::InvalidInput("empty curve matrices".into()));
    }
    Ok((estimate - truth).norm_squared() / estimate.len() as f64)
}

/// Pair counts from the contingency table of two labelings.
struct PairCounts {
    sum_cells: f64,
    sum_rows: f64,
    sum_cols: f64,
    total: f64,
}

fn choose2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

fn pair_counts(c1: &[usize], c2: &[usize]) -> Result<PairCounts> {
    if c1.len() != c2.len() {
        return Err(Error::DimensionMismatch(format!(
            "labelings have lengths {} and {}",
            c1.len(),
            c2.len()
        )));
    }
    if c1.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 items to compare partitions".into()));
    }
    let k1 = c1.iter().max().unwrap() + 1;
    let k2 = c2.iter().max().unwrap() + 1;
    let mut table = vec![0usize; k1 * k2];
    for (&a, &b) in c1.iter().zip(c2) {
        table[a * k2 + b] += 1;
    }
    let mut rows = vec![0usize; k1];
    let mut cols = vec![0usize; k2];
    for a in 0..k1 {
        for b in 0..k2 {
            rows[a] += table[a * k2 + b];
            cols[b] += table[a * k2 + b];
        }
    }
    Ok(PairCounts {
        sum_cells: table.iter().map(|&n| choose2(n)).sum(),
        sum_rows: rows.iter().map(|&n| choose2(n)).sum(),
        sum_cols: cols.iter().map(|&n| choose2(n)).sum(),
        total: choose2(c1.len()),
    })
}

/// Fraction of item pairs on which two partitions agree. Label values are
/// arbitrary identifiers, `0` included.
pub fn rand_index(c1: &[usize], c2: &[usize]) -> Result<f64> {
    let pc = pair_counts(c1, c2)?;
    // pairs together in both + pairs apart in both
    let agree = pc.total + 2.0 * pc.sum_cells - pc.sum_rows - pc.sum_cols;
    Ok(agree / pc.total)
}

/// Rand index corrected for chance under the permutation model.
///
/// When both partitions are trivial in the same way (the expected index
/// equals its maximum) the index is defined as 1.
pub fn adjusted_rand_index(c1: &[usize], c2: &[usize]) -> Result<f64> {
    let pc = pair_counts(c1, c2)?;
    let expected = pc.sum_rows * pc.sum_cols / pc.total;
    let max = 0.5 * (pc.sum_rows + pc.sum_cols);
    if (max - expected).abs() < 1e-12 {
        return Ok(if (pc.sum_cells - expected).abs() < 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((pc.sum_cells - expected) / (max - expected))
}
