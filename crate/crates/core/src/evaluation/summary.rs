use crate::error::{Error, Result};

/// Fewest draws accepted for 2.5% / 97.5% bands.
pub const MIN_SUMMARY_DRAWS: usize = 40;

pub const LOWER_PROB: f64 = 0.025;
pub const UPPER_PROB: f64 = 0.975;

/// Quantile of sorted data by linear interpolation between order statistics,
/// placing the `k`-th of `n` values (1-based) at probability `(k - 0.5) / n`.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 * prob + 0.5).clamp(1.0, n as f64);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo >= n {
        return sorted[n - 1];
    }
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

/// Pointwise posterior mean and 95% band of one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Summarize `S` draws of a curve, each of length `T`.
pub fn curve_summary(draws: &[Vec<f64>]) -> Result<CurveSummary> {
    if draws.len() < MIN_SUMMARY_DRAWS {
        return Err(Error::InvalidInput(format!(
            "curve summary needs at least {MIN_SUMMARY_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    let t = draws[0].len();
    if draws.iter().any(|d| d.len() != t) {
        return Err(Error::DimensionMismatch("curve draws differ in length".into()));
    }
    let s = draws.len() as f64;
    let mut out = CurveSummary {
        mean: Vec::with_capacity(t),
        lower: Vec::with_capacity(t),
        upper: Vec::with_capacity(t),
    };
    let mut column = Vec::with_capacity(draws.len());
    for j in 0..t {
        column.clear();
        column.extend(draws.iter().map(|d| d[j]));
        out.mean.push(column.iter().sum::<f64>() / s);
        column.sort_by(f64::total_cmp);
        out.lower.push(quantile_sorted(&column, LOWER_PROB));
        out.upper.push(quantile_sorted(&column, UPPER_PROB));
    }
    Ok(out)
}
