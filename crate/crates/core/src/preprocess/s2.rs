//! Sentinel-2 stacks and cloud-free median composites.

use serde::{Deserialize, Serialize};

use super::stats::quantile_sorted;
use super::PreprocessError;
use crate::raster::{Raster, SampleType};

pub const S2_DATES: usize = 17;
pub const S2_BANDS_PER_DATE: usize = 13;

/// Band slot within one acquisition date. The last slot is the cloud mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum S2Band {
    B01,
    B02,
    B03,
    B04,
    B05,
    B06,
    B07,
    B08,
    B8A,
    B09,
    B11,
    B12,
    CloudMask,
}

impl S2Band {
    pub const SPECTRAL: [S2Band; 12] = [
        S2Band::B01,
        S2Band::B02,
        S2Band::B03,
        S2Band::B04,
        S2Band::B05,
        S2Band::B06,
        S2Band::B07,
        S2Band::B08,
        S2Band::B8A,
        S2Band::B09,
        S2Band::B11,
        S2Band::B12,
    ];

    /// Blue, green, red and near-infrared.
    pub const DEFAULT_COMPOSITE: [S2Band; 4] = [S2Band::B02, S2Band::B03, S2Band::B04, S2Band::B08];

    pub fn slot(self) -> usize {
        self as usize
    }
}

/// A float raster holding `dates x 13` bands: for each date the 12 spectral
/// bands followed by a cloud mask (nonzero = cloudy).
#[derive(Clone, Copy, Debug)]
pub struct S2Stack<'a> {
    raster: &'a Raster,
    dates: usize,
}

impl<'a> S2Stack<'a> {
    pub fn new(raster: &'a Raster) -> Result<Self, PreprocessError> {
        if raster.sample_type() != SampleType::F32 || !raster.bands().is_multiple_of(S2_BANDS_PER_DATE) {
            return Err(PreprocessError::InconsistentShape(format!(
                "an S2 stack needs a float32 raster with a multiple of {S2_BANDS_PER_DATE} bands, got {} {:?} bands",
                raster.bands(),
                raster.sample_type()
            )));
        }
        Ok(Self { raster, dates: raster.bands() / S2_BANDS_PER_DATE })
    }

    pub fn dates(&self) -> usize {
        self.dates
    }

    pub fn raster(&self) -> &Raster {
        self.raster
    }

    pub fn value(&self, x: usize, y: usize, date: usize, band: S2Band) -> f64 {
        self.raster.get(x, y, date * S2_BANDS_PER_DATE + band.slot())
    }

    pub fn is_clear(&self, x: usize, y: usize, date: usize) -> bool {
        self.value(x, y, date, S2Band::CloudMask) == 0.0
    }
}

/// Per-pixel median over cloud-free dates, one output band per channel.
///
/// A pixel with no clear date takes the median of every clear observation of
/// that channel in the tile. If the whole tile is cloudy on every date the
/// channel is filled with zeros.
pub fn s2_median_composite(stack: &S2Stack<'_>, channels: &[S2Band]) -> Result<Raster, PreprocessError> {
    if channels.is_empty() {
        return Err(PreprocessError::NoChannels);
    }
    if let Some(&c) = channels.iter().find(|&&c| c == S2Band::CloudMask) {
        return Err(PreprocessError::InvalidChannel(format!("{c:?} is not a spectral band")));
    }
    let (w, h) = (stack.raster.width(), stack.raster.height());
    let mut planes = Vec::with_capacity(channels.len());
    for &channel in channels {
        let mut plane: Vec<Option<f32>> = vec![None; w * h];
        let mut all_clear = Vec::new();
        let mut series = Vec::with_capacity(stack.dates);
        for y in 0..h {
            for x in 0..w {
                series.clear();
                series.extend(
                    (0..stack.dates).filter(|&d| stack.is_clear(x, y, d)).map(|d| stack.value(x, y, d, channel)),
                );
                if series.is_empty() {
                    continue;
                }
                all_clear.extend_from_slice(&series);
                series.sort_by(f64::total_cmp);
                plane[y * w + x] = Some(quantile_sorted(&series, 0.5) as f32);
            }
        }
        let fill = if all_clear.is_empty() {
            0.0
        } else {
            all_clear.sort_by(f64::total_cmp);
            quantile_sorted(&all_clear, 0.5) as f32
        };
        planes.push(plane.into_iter().map(|v| v.unwrap_or(fill)).collect());
    }
    Ok(Raster::from_f32_bands(w, h, &planes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds a stack from a closure `(x, y, date, slot) -> value`.
    fn stack_from(w: usize, h: usize, dates: usize, f: impl Fn(usize, usize, usize, usize) -> f32) -> Raster {
        let bands = dates * S2_BANDS_PER_DATE;
        let mut data = Vec::with_capacity(w * h * bands);
        for y in 0..h {
            for x in 0..w {
                for b in 0..bands {
                    data.push(f(x, y, b / S2_BANDS_PER_DATE, b % S2_BANDS_PER_DATE));
                }
            }
        }
        Raster::from_f32(w, h, bands, data).unwrap()
    }

    const CLOUD: usize = 12;

    #[test]
    fn constant_clear_stack() {
        let r = stack_from(3, 3, S2_DATES, |_, _, _, s| if s == CLOUD { 0.0 } else { 0.3 });
        let c = s2_median_composite(&S2Stack::new(&r).unwrap(), &S2Band::DEFAULT_COMPOSITE).unwrap();
        assert_eq!(c.bands(), 4);
        assert!(c.as_f32().unwrap().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn fully_clouded_pixel_takes_tile_median() {
        let r = stack_from(3, 3, 4, |x, y, _, s| match s {
            CLOUD => f32::from(u8::from(x == 1 && y == 1)),
            _ => {
                if x == 1 && y == 1 {
                    99.0
                } else {
                    0.7
                }
            }
        });
        let c = s2_median_composite(&S2Stack::new(&r).unwrap(), &[S2Band::B04]).unwrap();
        assert!(c.as_f32().unwrap().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn median_of_three_clear_dates() {
        let vals = [1.0, 9.0, 2.0];
        let r = stack_from(1, 1, 4, |_, _, d, s| match (d, s) {
            (3, CLOUD) => 1.0,
            (_, CLOUD) => 0.0,
            (3, _) => 100.0,
            (d, _) => vals[d],
        });
        let c = s2_median_composite(&S2Stack::new(&r).unwrap(), &[S2Band::B08]).unwrap();
        assert_eq!(c.as_f32().unwrap(), &[2.0]);
    }

    #[test]
    fn rejects_bad_channels() {
        let r = stack_from(1, 1, 1, |_, _, _, _| 0.0);
        let s = S2Stack::new(&r).unwrap();
        assert!(matches!(s2_median_composite(&s, &[]), Err(PreprocessError::NoChannels)));
        assert!(matches!(s2_median_composite(&s, &[S2Band::CloudMask]), Err(PreprocessError::InvalidChannel(_))));
        let bad = Raster::from_f32(1, 1, 5, vec![0.0; 5]).unwrap();
        assert!(S2Stack::new(&bad).is_err());
    }
}
