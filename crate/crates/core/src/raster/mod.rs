//! Multi-band raster tiles: the in-memory container, a strict TIFF subset
//! codec, modality shape rules, and dataset directory scanning.

mod modality;
mod scan;
mod tiff;

pub use modality::{Geometry, MaskMode, ModalityKind, TileRecord};
pub use scan::{scan_dataset, NamingPattern, ScanOptions, ScanOutcome, ValidationEntry, ValidationStatus};
pub use tiff::{read_tiff, read_tiff_as, read_tiff_file, write_tiff, write_tiff_file};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster dimensions must be at least 1x1x1, got {width}x{height}x{bands}")]
    EmptyRaster { width: usize, height: usize, bands: usize },
    #[error("sample buffer holds {found} samples, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite float sample at index {0} in a raster without fill values")]
    NonFinite(usize),
    #[error("unsupported TIFF feature: {0}")]
    UnsupportedFeature(String),
    #[error("malformed TIFF: {0}")]
    Malformed(String),
    #[error("shape mismatch for {kind}: expected {expected}, found {found}")]
    ShapeMismatch { kind: ModalityKind, expected: String, found: String },
    #[error("window {w}x{h} at ({x},{y}) does not fit inside {width}x{height}")]
    WindowOutOfBounds { x: usize, y: usize, w: usize, h: usize, width: usize, height: usize },
    #[error("mask value {value} at sample {index} is not 0 or 255")]
    InvalidMaskValue { index: usize, value: u8 },
    #[error("probability sample {value} at index {index} is outside [0, 1]")]
    InvalidProbability { index: usize, value: f32 },
    #[error("tile {tile_id} already has a {kind} raster")]
    DuplicateModality { tile_id: u64, kind: ModalityKind },
    #[error("invalid naming pattern `{0}`: it needs exactly one {{id}} and one {{modality}}")]
    InvalidPattern(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RasterError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        RasterError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleType {
    U8,
    F32,
}

impl SampleType {
    pub fn bytes(self) -> usize {
        match self {
            SampleType::U8 => 1,
            SampleType::F32 => 4,
        }
    }
}

/// Sample storage, band-interleaved by pixel: index `(y * width + x) * bands + band`.
#[derive(Clone, Debug)]
pub enum Samples {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::U8(v) => v.len(),
            Samples::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_type(&self) -> SampleType {
        match self {
            Samples::U8(_) => SampleType::U8,
            Samples::F32(_) => SampleType::F32,
        }
    }
}

/// A width x height x bands grid of uint8 or float32 samples.
///
/// Equality is bit-exact: float samples compare by their IEEE-754 bit patterns.
#[derive(Clone, Debug)]
pub struct Raster {
    width: usize,
    height: usize,
    bands: usize,
    samples: Samples,
    fill_values: bool,
}

impl PartialEq for Raster {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bands == other.bands
            && match (&self.samples, &other.samples) {
                (Samples::U8(a), Samples::U8(b)) => a == b,
                (Samples::F32(a), Samples::F32(b)) => {
                    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
                }
                _ => false,
            }
    }
}

impl Raster {
    pub fn new(width: usize, height: usize, bands: usize, samples: Samples) -> Result<Self, RasterError> {
        let raster = Self::with_fill_values(width, height, bands, samples)?;
        if let Samples::F32(v) = &raster.samples {
            if let Some(i) = v.iter().position(|s| !s.is_finite()) {
                return Err(RasterError::NonFinite(i));
            }
        }
        Ok(Self { fill_values: false, ..raster })
    }

    /// Builds a raster that may carry non-finite fill samples (e.g. NaN no-data).
    pub fn with_fill_values(
        width: usize,
        height: usize,
        bands: usize,
        samples: Samples,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(RasterError::EmptyRaster { width, height, bands });
        }
        let expected = width * height * bands;
        if samples.len() != expected {
            return Err(RasterError::LengthMismatch { expected, found: samples.len() });
        }
        Ok(Self { width, height, bands, samples, fill_values: true })
    }

    pub fn from_u8(width: usize, height: usize, bands: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        Self::new(width, height, bands, Samples::U8(data))
    }

    pub fn from_f32(width: usize, height: usize, bands: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        Self::new(width, height, bands, Samples::F32(data))
    }

    pub fn zeros(width: usize, height: usize, bands: usize, sample_type: SampleType) -> Result<Self, RasterError> {
        let n = width * height * bands;
        let samples = match sample_type {
            SampleType::U8 => Samples::U8(vec![0; n]),
            SampleType::F32 => Samples::F32(vec![0.0; n]),
        };
        Self::new(width, height, bands, samples)
    }

    /// Interleaves equally sized single-band planes into one float raster.
    pub fn from_f32_bands(width: usize, height: usize, planes: &[Vec<f32>]) -> Result<Self, RasterError> {
        let bands = planes.len();
        let n = width * height;
        if let Some(p) = planes.iter().find(|p| p.len() != n) {
            return Err(RasterError::LengthMismatch { expected: n, found: p.len() });
        }
        let mut data = vec![0.0f32; n * bands];
        for (b, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                data[i * bands + b] = v;
            }
        }
        Self::from_f32(width, height, bands, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn sample_type(&self) -> SampleType {
        self.samples.sample_type()
    }

    /// Whether the raster may contain non-finite fill samples.
    pub fn has_fill_values(&self) -> bool {
        self.fill_values
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn into_samples(self) -> Samples {
        self.samples
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.samples {
            Samples::U8(v) => Some(v),
            Samples::F32(_) => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.samples {
            Samples::F32(v) => Some(v),
            Samples::U8(_) => None,
        }
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, band: usize) -> usize {
        (y * self.width + x) * self.bands + band
    }

    /// Sample value widened to f64.
    pub fn get(&self, x: usize, y: usize, band: usize) -> f64 {
        let i = self.index(x, y, band);
        match &self.samples {
            Samples::U8(v) => f64::from(v[i]),
            Samples::F32(v) => f64::from(v[i]),
        }
    }

    /// One band as f64 values in raster order.
    pub fn band_values(&self, band: usize) -> Vec<f64> {
        let n = self.width * self.height;
        match &self.samples {
            Samples::U8(v) => (0..n).map(|i| f64::from(v[i * self.bands + band])).collect(),
            Samples::F32(v) => (0..n).map(|i| f64::from(v[i * self.bands + band])).collect(),
        }
    }

    /// Raw little-endian sample payload, exactly as stored in a TIFF strip.
    pub fn payload_bytes(&self) -> Vec<u8> {
        match &self.samples {
            Samples::U8(v) => v.clone(),
            Samples::F32(v) => v.iter().flat_map(|s| s.to_le_bytes()).collect(),
        }
    }

    /// Copies the `w` x `h` window at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Raster, RasterError> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(RasterError::WindowOutOfBounds {
                x: x0,
                y: y0,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        let b = self.bands;
        let row_span = |src_y: usize| {
            let start = (src_y * self.width + x0) * b;
            start..start + w * b
        };
        let samples = match &self.samples {
            Samples::U8(v) => Samples::U8((y0..y0 + h).flat_map(|y| v[row_span(y)].iter().copied()).collect()),
            Samples::F32(v) => Samples::F32((y0..y0 + h).flat_map(|y| v[row_span(y)].iter().copied()).collect()),
        };
        Ok(Raster { width: w, height: h, bands: b, samples, fill_values: self.fill_values })
    }

    /// Copies every band of pixel `(sx, sy)` in `src` onto pixel `(dx, dy)` of `self`.
    /// Both rasters must share band count and sample type.
    pub(crate) fn copy_pixel_from(&mut self, dx: usize, dy: usize, src: &Raster, sx: usize, sy: usize) {
        let b = self.bands;
        let d = self.index(dx, dy, 0);
        let s = src.index(sx, sy, 0);
        match (&mut self.samples, &src.samples) {
            (Samples::U8(dst), Samples::U8(srcv)) => dst[d..d + b].copy_from_slice(&srcv[s..s + b]),
            (Samples::F32(dst), Samples::F32(srcv)) => dst[d..d + b].copy_from_slice(&srcv[s..s + b]),
            _ => unreachable!("sample types checked by caller"),
        }
    }

    /// Same grid with samples produced by an index permutation: output pixel
    /// `i` takes every band of input pixel `perm[i]`.
    pub(crate) fn permute_pixels(&self, width: usize, height: usize, perm: &[usize]) -> Raster {
        let b = self.bands;
        let samples = match &self.samples {
            Samples::U8(v) => Samples::U8(perm.iter().flat_map(|&p| v[p * b..p * b + b].iter().copied()).collect()),
            Samples::F32(v) => Samples::F32(perm.iter().flat_map(|&p| v[p * b..p * b + b].iter().copied()).collect()),
        };
        Raster { width, height, bands: b, samples, fill_values: self.fill_values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_buffers() {
        assert!(matches!(Raster::from_u8(2, 2, 1, vec![0; 3]), Err(RasterError::LengthMismatch { .. })));
        assert!(matches!(Raster::from_u8(0, 2, 1, vec![]), Err(RasterError::EmptyRaster { .. })));
        assert!(matches!(Raster::from_f32(1, 1, 1, vec![f32::NAN]), Err(RasterError::NonFinite(0))));
        let r = Raster::with_fill_values(1, 1, 1, Samples::F32(vec![f32::NAN])).unwrap();
        assert!(r.has_fill_values());
    }

    #[test]
    fn equality_is_bitwise() {
        let a = Raster::from_f32(1, 1, 1, vec![0.0]).unwrap();
        let b = Raster::from_f32(1, 1, 1, vec![-0.0]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn crop_and_band_planes() {
        let r = Raster::from_f32_bands(3, 2, &[vec![0., 1., 2., 3., 4., 5.], vec![10., 11., 12., 13., 14., 15.]])
            .unwrap();
        assert_eq!(r.get(2, 1, 1), 15.0);
        let c = r.crop(1, 0, 2, 2).unwrap();
        assert_eq!(c.band_values(0), vec![1., 2., 4., 5.]);
        assert_eq!(c.band_values(1), vec![11., 12., 14., 15.]);
        assert!(r.crop(2, 0, 2, 1).is_err());
    }
}
