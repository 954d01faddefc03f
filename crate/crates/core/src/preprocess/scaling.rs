use super::stats::quantile_sorted;
use crate::raster::Raster;

pub const DEFAULT_UPPER_QUANTILE: f64 = 0.90;

/// Per-band min/quantile scaling into `[0, 1]`.
///
/// Each band is mapped with `lo = min` and `hi = quantile(upper_quantile)`,
/// then clamped; a band with `hi == lo` becomes all zeros. Using a quantile
/// instead of the maximum keeps a few bright outliers from compressing the
/// rest of the range.
pub fn robust_minmax(raster: &Raster, upper_quantile: f64) -> Raster {
    let (w, h, bands) = (raster.width(), raster.height(), raster.bands());
    let planes: Vec<Vec<f32>> = (0..bands)
        .map(|b| {
            let values = raster.band_values(b);
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let lo = sorted[0];
            let hi = quantile_sorted(&sorted, upper_quantile);
            if hi <= lo {
                return vec![0.0; values.len()];
            }
            values.iter().map(|&v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0) as f32).collect()
        })
        .collect();
    Raster::from_f32_bands(w, h, &planes).expect("planes built from a valid raster")
}
