//! Model-ready inputs from raw modalities: Sentinel-1 normalization and
//! temporal statistics, Sentinel-2 cloud-free composites with robust
//! scaling, and decoding of 0/255 mask files.

mod mask_codec;
pub mod s1;
pub mod s2;
mod scaling;
pub mod stats;

pub use mask_codec::{mask_decode, mask_encode, ABSENT, PRESENT};
pub use s1::{build_s1_tile, db_to_unit, sigma0_to_unit, Acquisition, InputScale, Orbit, Period, Polarization, S1Layout, Statistic};
pub use s2::{s2_median_composite, S2Band, S2Stack};
pub use scaling::{robust_minmax, DEFAULT_UPPER_QUANTILE};
pub use stats::{quantile, temporal_stats, TemporalStats};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RasterError;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("cannot compute statistics of an empty series")]
    EmptySeries,
    #[error("no acquisitions for {polarization:?}/{orbit:?} in period {period:?}")]
    MissingGroup { polarization: Polarization, orbit: Orbit, period: Period },
    #[error("acquisition year {0} is outside 2017-2020")]
    YearOutOfRange(u16),
    #[error("no composite channels requested")]
    NoChannels,
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("inconsistent input shape: {0}")]
    InconsistentShape(String),
    #[error("mask value {value} at sample {index} is not 0 or 255")]
    InvalidMaskValue { index: usize, value: u8 },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Parameters recorded next to preprocessed outputs so they can be regenerated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessManifest {
    pub s1_statistics: Vec<Statistic>,
    pub s1_polarizations: Vec<Polarization>,
    pub s1_orbits: Vec<Orbit>,
    pub s1_periods: Vec<Period>,
    pub s1_band_formula: String,
    pub s1_input_scale: InputScale,
    pub s1_db_range: [f64; 2],
    pub s2_channels: Vec<S2Band>,
    pub upper_quantile: f64,
    pub composite_fill_policy: String,
}

impl PreprocessManifest {
    pub fn new(s1_input_scale: InputScale, s2_channels: Vec<S2Band>, upper_quantile: f64) -> Self {
        Self {
            s1_statistics: Statistic::ALL.to_vec(),
            s1_polarizations: Polarization::ALL.to_vec(),
            s1_orbits: Orbit::ALL.to_vec(),
            s1_periods: Period::ALL.to_vec(),
            s1_band_formula: "((period * 2 + orbit) * 2 + polarization) * 6 + statistic".into(),
            s1_input_scale,
            s1_db_range: [s1::DB_MIN, s1::DB_MAX],
            s2_channels,
            upper_quantile,
            composite_fill_policy: "median of all clear observations in the tile; zero when none".into(),
        }
    }
}
