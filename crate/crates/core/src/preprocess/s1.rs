//! Sentinel-1 backscatter normalization and the 120-band temporal statistics layout.

use serde::{Deserialize, Serialize};

use super::stats::temporal_stats;
use super::PreprocessError;
use crate::raster::{Raster, SampleType};

pub const DB_MIN: f64 = -30.0;
pub const DB_MAX: f64 = 5.0;

/// Maps a decibel value onto `[0, 1]` after clamping to `[-30, 5]` dB.
pub fn db_to_unit(db: f64) -> f64 {
    if db.is_nan() {
        return 0.0;
    }
    (db.clamp(DB_MIN, DB_MAX) - DB_MIN) / (DB_MAX - DB_MIN)
}

/// Linear backscatter coefficient to the unit interval via decibels.
/// Zero (or negative) backscatter is minus infinity dB and clamps to 0.
pub fn sigma0_to_unit(sigma0_linear: f64) -> f64 {
    if sigma0_linear.is_nan() || sigma0_linear <= 0.0 {
        return 0.0;
    }
    db_to_unit(10.0 * sigma0_linear.log10())
}

/// How incoming acquisition rasters are scaled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScale {
    /// Linear sigma0; normalized with [`sigma0_to_unit`].
    #[default]
    LinearSigma0,
    /// Decibels; normalized with [`db_to_unit`].
    Decibel,
    /// Already in `[0, 1]`; passed through.
    Unit,
}

impl InputScale {
    pub fn normalize(self, v: f64) -> f64 {
        match self {
            InputScale::LinearSigma0 => sigma0_to_unit(v),
            InputScale::Decibel => db_to_unit(v),
            InputScale::Unit => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Median,
    Std,
    CoeffOfVariation,
    P5,
    P95,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Vv,
    Vh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orbit {
    Ascending,
    Descending,
}

/// Aggregation period: a single year or the pooled 2017-2020 span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    Y2017,
    Y2018,
    Y2019,
    Y2020,
    Y2017To2020,
}

impl Statistic {
    pub const ALL: [Statistic; 6] = [
        Statistic::Mean,
        Statistic::Median,
        Statistic::Std,
        Statistic::CoeffOfVariation,
        Statistic::P5,
        Statistic::P95,
    ];
}

impl Polarization {
    pub const ALL: [Polarization; 2] = [Polarization::Vv, Polarization::Vh];
}

impl Orbit {
    pub const ALL: [Orbit; 2] = [Orbit::Ascending, Orbit::Descending];
}

impl Period {
    pub const ALL: [Period; 5] = [Period::Y2017, Period::Y2018, Period::Y2019, Period::Y2020, Period::Y2017To2020];

    pub fn contains(self, year: u16) -> bool {
        match self {
            Period::Y2017 => year == 2017,
            Period::Y2018 => year == 2018,
            Period::Y2019 => year == 2019,
            Period::Y2020 => year == 2020,
            Period::Y2017To2020 => (2017..=2020).contains(&year),
        }
    }
}

/// Band ordering of an S1 tile:
/// `index = ((period * 2 + orbit) * 2 + polarization) * 6 + statistic`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct S1Layout;

impl S1Layout {
    pub const BANDS: usize = 120;

    pub fn band_index(period: Period, orbit: Orbit, polarization: Polarization, statistic: Statistic) -> usize {
        ((period as usize * 2 + orbit as usize) * 2 + polarization as usize) * 6 + statistic as usize
    }

    pub fn band_meaning(index: usize) -> Option<(Period, Orbit, Polarization, Statistic)> {
        if index >= Self::BANDS {
            return None;
        }
        Some((
            Period::ALL[index / 24],
            Orbit::ALL[(index / 12) % 2],
            Polarization::ALL[(index / 6) % 2],
            Statistic::ALL[index % 6],
        ))
    }
}

/// One single-band Sentinel-1 acquisition.
#[derive(Clone, Debug)]
pub struct Acquisition {
    pub polarization: Polarization,
    pub orbit: Orbit,
    pub year: u16,
    pub raster: Raster,
}

/// Builds the 120-band temporal statistics tile from dated acquisitions.
///
/// Every (polarization, orbit, period) group needs at least one acquisition;
/// the pooled period collects every acquisition from 2017 through 2020.
pub fn build_s1_tile(acquisitions: &[Acquisition], scale: InputScale) -> Result<Raster, PreprocessError> {
    let first = acquisitions.first().ok_or(PreprocessError::MissingGroup {
        polarization: Polarization::Vv,
        orbit: Orbit::Ascending,
        period: Period::Y2017,
    })?;
    let (w, h) = (first.raster.width(), first.raster.height());
    for a in acquisitions {
        if a.raster.width() != w || a.raster.height() != h || a.raster.bands() != 1 {
            return Err(PreprocessError::InconsistentShape(format!(
                "acquisition {}x{}x{} does not match {w}x{h}x1",
                a.raster.width(),
                a.raster.height(),
                a.raster.bands()
            )));
        }
        if !Period::Y2017To2020.contains(a.year) {
            return Err(PreprocessError::YearOutOfRange(a.year));
        }
    }

    let normalized: Vec<Vec<f64>> = acquisitions
        .iter()
        .map(|a| a.raster.band_values(0).into_iter().map(|v| scale.normalize(v)).collect())
        .collect();

    let mut planes = vec![vec![0f32; w * h]; S1Layout::BANDS];
    for period in Period::ALL {
        for orbit in Orbit::ALL {
            for polarization in Polarization::ALL {
                let members: Vec<usize> = acquisitions
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.polarization == polarization && a.orbit == orbit && period.contains(a.year))
                    .map(|(i, _)| i)
                    .collect();
                if members.is_empty() {
                    return Err(PreprocessError::MissingGroup { polarization, orbit, period });
                }
                let mut series = vec![0.0; members.len()];
                for px in 0..w * h {
                    for (slot, &m) in series.iter_mut().zip(&members) {
                        *slot = normalized[m][px];
                    }
                    let stats = temporal_stats(&series)?.to_array();
                    for (statistic, value) in Statistic::ALL.into_iter().zip(stats) {
                        planes[S1Layout::band_index(period, orbit, polarization, statistic)][px] = value as f32;
                    }
                }
            }
        }
    }
    let raster = Raster::from_f32_bands(w, h, &planes)?;
    debug_assert_eq!(raster.sample_type(), SampleType::F32);
    Ok(raster)
}
