//! Tolerance checks shared by the acceptance suite.
//!
//! Every function compares per-time summaries of a propagated distribution
//! with a Monte Carlo reference on the same grid.

use nalgebra::{DMatrix, DVector};

/// 97.5% standard normal quantile.
pub const Z95: f64 = 1.96;

/// Worst pointwise mean deviation relative to its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCheck {
    pub points: usize,
    pub violations: usize,
    /// Largest `|m − r| / tol` over times and coordinates.
    pub worst_ratio: f64,
    pub worst_time: f64,
    pub worst_coord: usize,
}

impl MeanCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Per-coordinate `max − min` of a trajectory of means.
pub fn solution_range(mean: &[DVector<f64>]) -> DVector<f64> {
    let d = mean[0].len();
    DVector::from_fn(d, |k, _| {
        let (lo, hi) = mean.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m[k]), hi.max(m[k])));
        hi - lo
    })
}

/// Checks `|m − r| ≤ max(se_multiple · se, range_fraction · range_k)` at every time and coordinate.
///
/// `se` is the standard error of `m − r` per time; `range` is taken from the reference means.
pub fn mean_check(
    times: &[f64],
    mean: &[DVector<f64>],
    reference: &[DVector<f64>],
    se: &[DVector<f64>],
    se_multiple: f64,
    range_fraction: f64,
) -> MeanCheck {
    let range = solution_range(reference);
    let mut out = MeanCheck { points: 0, violations: 0, worst_ratio: 0.0, worst_time: times[0], worst_coord: 0 };
    for (n, &t) in times.iter().enumerate() {
        for k in 0..range.len() {
            let tol = (se_multiple * se[n][k]).max(range_fraction * range[k]);
            let gap = (mean[n][k] - reference[n][k]).abs();
            let ratio = if tol > 0.0 { gap / tol } else if gap > 0.0 { f64::INFINITY } else { 0.0 };
            out.points += 1;
            if !(ratio <= 1.0) {
                out.violations += 1;
            }
            if !(ratio <= out.worst_ratio) {
                out.worst_ratio = ratio;
                out.worst_time = t;
                out.worst_coord = k;
            }
        }
    }
    out
}

/// Per-coordinate median over the grid of `|h / h_ref − 1|` for 95% half-widths.
///
/// Times where the reference half-width vanishes are skipped.
pub fn ci_median_deviation(cov: &[DMatrix<f64>], reference: &[DMatrix<f64>]) -> Vec<f64> {
    let d = reference[0].nrows();
    (0..d)
        .map(|k| {
            let devs: Vec<f64> = cov
                .iter()
                .zip(reference)
                .filter(|(_, r)| r[(k, k)] > 0.0)
                .map(|(c, r)| (Z95 * c[(k, k)].max(0.0).sqrt()) / (Z95 * r[(k, k)].sqrt()) - 1.0)
                .map(f64::abs)
                .collect();
            median(devs)
        })
        .collect()
}

/// Median of a sample, `NaN` when empty.
pub fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Number of adjacent pairs with `v[i+1] < v[i]`.
pub fn adjacent_inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] < w[0]).count()
}

/// Rounds to `digits` significant decimal digits.
pub fn round_sig(v: f64, digits: i32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let scale = 10f64.powi(digits - 1 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}
