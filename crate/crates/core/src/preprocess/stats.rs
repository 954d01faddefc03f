//! Scalar statistics over short per-pixel time series.

use serde::{Deserialize, Serialize};

use super::PreprocessError;

/// Means below this are treated as zero when computing the coefficient of variation.
pub const CV_MEAN_EPSILON: f64 = 1e-12;

/// Linear-interpolated quantile of an ascending slice (inclusive method:
/// rank `h = (n - 1) * q`, interpolated between `floor(h)` and `ceil(h)`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile of unsorted values. NaNs sort last.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

/// The six per-pixel temporal statistics, in band order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalStats {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
    /// `std / mean`, or 0 when the mean is (numerically) zero.
    pub cv: f64,
    pub p5: f64,
    pub p95: f64,
}

impl TemporalStats {
    pub fn to_array(self) -> [f64; 6] {
        [self.mean, self.median, self.std, self.cv, self.p5, self.p95]
    }
}

pub fn temporal_stats(samples: &[f64]) -> Result<TemporalStats, PreprocessError> {
    if samples.is_empty() {
        return Err(PreprocessError::EmptySeries);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let cv = if mean.abs() < CV_MEAN_EPSILON { 0.0 } else { std / mean };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(TemporalStats {
        mean,
        median: quantile_sorted(&sorted, 0.5),
        std,
        cv,
        p5: quantile_sorted(&sorted, 0.05),
        p95: quantile_sorted(&sorted, 0.95),
    })
}
