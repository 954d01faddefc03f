use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Raster, RasterError, SampleType};
use crate::Structure;

/// Sentinel-1 temporal statistics bands per tile.
pub const S1_BANDS: usize = 120;
/// Sentinel-2 bands per tile: 17 dates x 13 bands.
pub const S2_BANDS: usize = 221;
/// Derived lidar visualizations: sky-view factor, positive openness, slope.
pub const ALS_BANDS: usize = 3;

/// The kinds of raster that can be attached to a tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityKind {
    S1,
    S2,
    Als,
    Mask(Structure),
    Prob(Structure),
}

/// Pixel sides of the two tile resolutions. Defaults match the challenge data
/// (24 px Sentinel, 480 px lidar and masks); tests shrink them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub sentinel_side: usize,
    pub als_side: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { sentinel_side: 24, als_side: 480 }
    }
}

/// How mask files with values other than 0 and 255 are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Only 0 (present) and 255 (absent) are accepted.
    #[default]
    Strict,
    /// Any value is accepted; values below 128 mean present.
    Lenient,
}

impl ModalityKind {
    pub const ALL: [ModalityKind; 9] = [
        ModalityKind::S1,
        ModalityKind::S2,
        ModalityKind::Als,
        ModalityKind::Mask(Structure::Building),
        ModalityKind::Mask(Structure::Platform),
        ModalityKind::Mask(Structure::Aguada),
        ModalityKind::Prob(Structure::Building),
        ModalityKind::Prob(Structure::Platform),
        ModalityKind::Prob(Structure::Aguada),
    ];

    /// File-name token, e.g. `lidar` or `mask_building`.
    pub fn token(self) -> String {
        match self {
            ModalityKind::S1 => "s1".into(),
            ModalityKind::S2 => "s2".into(),
            ModalityKind::Als => "lidar".into(),
            ModalityKind::Mask(s) => format!("mask_{s}"),
            ModalityKind::Prob(s) => format!("prob_{s}"),
        }
    }

    /// `(width, height, bands, sample type)` required for this kind.
    pub fn expected_shape(self, g: Geometry) -> (usize, usize, usize, SampleType) {
        match self {
            ModalityKind::S1 => (g.sentinel_side, g.sentinel_side, S1_BANDS, SampleType::F32),
            ModalityKind::S2 => (g.sentinel_side, g.sentinel_side, S2_BANDS, SampleType::F32),
            ModalityKind::Als => (g.als_side, g.als_side, ALS_BANDS, SampleType::U8),
            ModalityKind::Mask(_) => (g.als_side, g.als_side, 1, SampleType::U8),
            ModalityKind::Prob(_) => (g.als_side, g.als_side, 1, SampleType::F32),
        }
    }

    /// Checks shape, sample type and the value domain of masks and probability maps.
    pub fn validate(self, raster: &Raster, g: Geometry, mode: MaskMode) -> Result<(), RasterError> {
        let (w, h, b, t) = self.expected_shape(g);
        let found = (raster.width(), raster.height(), raster.bands(), raster.sample_type());
        if found != (w, h, b, t) {
            return Err(RasterError::ShapeMismatch {
                kind: self,
                expected: format!("{w}x{h}x{b} {t:?}"),
                found: format!("{}x{}x{} {:?}", found.0, found.1, found.2, found.3),
            });
        }
        match self {
            ModalityKind::Mask(_) if mode == MaskMode::Strict => {
                let data = raster.as_u8().expect("type checked above");
                if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v != 0 && v != 255) {
                    return Err(RasterError::InvalidMaskValue { index, value });
                }
            }
            ModalityKind::Prob(_) => {
                let data = raster.as_f32().expect("type checked above");
                if let Some((index, &value)) =
                    data.iter().enumerate().find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
                {
                    return Err(RasterError::InvalidProbability { index, value });
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for ModalityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

impl FromStr for ModalityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "s1" => Ok(ModalityKind::S1),
            "s2" => Ok(ModalityKind::S2),
            "lidar" | "als" => Ok(ModalityKind::Als),
            _ => {
                let (prefix, class) = s.split_once('_').ok_or_else(|| format!("unknown modality `{s}`"))?;
                let class: Structure = class.parse().map_err(|_| format!("unknown modality `{s}`"))?;
                match prefix {
                    "mask" => Ok(ModalityKind::Mask(class)),
                    "prob" => Ok(ModalityKind::Prob(class)),
                    _ => Err(format!("unknown modality `{s}`")),
                }
            }
        }
    }
}

/// A tile id with whatever modality rasters are available for it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TileRecord {
    pub tile_id: u64,
    rasters: BTreeMap<ModalityKind, Raster>,
}

impl TileRecord {
    pub fn new(tile_id: u64) -> Self {
        Self { tile_id, rasters: BTreeMap::new() }
    }

    /// Attaches a raster; each kind may be attached once.
    pub fn insert(&mut self, kind: ModalityKind, raster: Raster) -> Result<(), RasterError> {
        if self.rasters.contains_key(&kind) {
            return Err(RasterError::DuplicateModality { tile_id: self.tile_id, kind });
        }
        self.rasters.insert(kind, raster);
        Ok(())
    }

    /// Attaches a raster, replacing any existing one of the same kind.
    pub fn replace(&mut self, kind: ModalityKind, raster: Raster) -> Option<Raster> {
        self.rasters.insert(kind, raster)
    }

    pub fn get(&self, kind: ModalityKind) -> Option<&Raster> {
        self.rasters.get(&kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = ModalityKind> + '_ {
        self.rasters.keys().copied()
    }

    pub fn rasters(&self) -> impl Iterator<Item = (ModalityKind, &Raster)> {
        self.rasters.iter().map(|(k, r)| (*k, r))
    }

    pub fn len(&self) -> usize {
        self.rasters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rasters.is_empty()
    }

    /// Applies `f` to every raster, keeping kinds.
    pub fn map_rasters(&self, mut f: impl FnMut(ModalityKind, &Raster) -> Raster) -> TileRecord {
        TileRecord {
            tile_id: self.tile_id,
            rasters: self.rasters.iter().map(|(k, r)| (*k, f(*k, r))).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_roundtrip() {
        for kind in ModalityKind::ALL {
            assert_eq!(kind.token().parse::<ModalityKind>().unwrap(), kind);
        }
        assert!("mask_road".parse::<ModalityKind>().is_err());
    }

    #[test]
    fn default_shapes() {
        let g = Geometry::default();
        assert_eq!(ModalityKind::S1.expected_shape(g), (24, 24, 120, SampleType::F32));
        assert_eq!(ModalityKind::S2.expected_shape(g), (24, 24, 221, SampleType::F32));
        assert_eq!(ModalityKind::Als.expected_shape(g), (480, 480, 3, SampleType::U8));
        assert_eq!(ModalityKind::Mask(Structure::Aguada).expected_shape(g), (480, 480, 1, SampleType::U8));
    }

    #[test]
    fn strict_and_lenient_masks() {
        let g = Geometry { sentinel_side: 1, als_side: 2 };
        let kind = ModalityKind::Mask(Structure::Platform);
        let r = Raster::from_u8(2, 2, 1, vec![0, 255, 42, 0]).unwrap();
        assert!(matches!(
            kind.validate(&r, g, MaskMode::Strict),
            Err(RasterError::InvalidMaskValue { index: 2, value: 42 })
        ));
        assert!(kind.validate(&r, g, MaskMode::Lenient).is_ok());
    }

    #[test]
    fn duplicate_kind_is_rejected() {
        let mut t = TileRecord::new(3);
        let r = Raster::from_u8(1, 1, 1, vec![0]).unwrap();
        t.insert(ModalityKind::Als, r.clone()).unwrap();
        assert!(matches!(t.insert(ModalityKind::Als, r), Err(RasterError::DuplicateModality { tile_id: 3, .. })));
    }
}
