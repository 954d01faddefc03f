//! Class statistics, samplers and fold splitting over labeled tiles.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, ProbMap};
use crate::postprocess::{binarize, ProbabilityThreshold};
use crate::rng::stage_rng;
use crate::Structure;

pub const DEFAULT_CROP_SIDE: usize = 256;
pub const DEFAULT_MIN_CROP_FRACTION: f64 = 0.005;
pub const DEFAULT_FRACTION_THRESHOLDS: [f64; 2] = [0.05, 0.15];

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("class {0} has positive weight but no tile contains it")]
    UnsatisfiableWeight(SampleClass),
    #[error("weights must be finite, non-negative and not all zero")]
    InvalidWeights,
    #[error("{tiles} tiles cannot be split into {k} folds")]
    TooFewTiles { tiles: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("oversampling factor must be at least 1")]
    InvalidFactor,
    #[error("no crop window satisfies the annotation requirement")]
    NoValidPosition,
    #[error("crop side {crop} exceeds tile {width}x{height}")]
    CropTooLarge { crop: usize, width: usize, height: usize },
    #[error("missing probability map for tile {tile_id} class {class}")]
    MissingProbMap { tile_id: u64, class: Structure },
    #[error("mask shape does not match tile {0}")]
    ShapeMismatch(u64),
}

/// Sampling category: one of the structures, or background for tiles
/// without any annotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleClass {
    Background,
    Aguada,
    Building,
    Platform,
}

impl SampleClass {
    pub const ALL: [SampleClass; 4] =
        [SampleClass::Background, SampleClass::Aguada, SampleClass::Building, SampleClass::Platform];

    pub fn structure(self) -> Option<Structure> {
        match self {
            SampleClass::Background => None,
            SampleClass::Aguada => Some(Structure::Aguada),
            SampleClass::Building => Some(Structure::Building),
            SampleClass::Platform => Some(Structure::Platform),
        }
    }
}

impl From<Structure> for SampleClass {
    fn from(s: Structure) -> Self {
        match s {
            Structure::Aguada => SampleClass::Aguada,
            Structure::Building => SampleClass::Building,
            Structure::Platform => SampleClass::Platform,
        }
    }
}

impl std::fmt::Display for SampleClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.structure() {
            Some(s) => s.fmt(f),
            None => f.write_str("background"),
        }
    }
}

/// Masks of one tile. A class without a mask has no annotated pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTile {
    pub id: u64,
    width: usize,
    height: usize,
    masks: BTreeMap<Structure, BinaryMask>,
    pub pseudo: bool,
}

impl LabeledTile {
    pub fn new(id: u64, width: usize, height: usize) -> Self {
        Self { id, width, height, masks: BTreeMap::new(), pseudo: false }
    }

    pub fn with_mask(mut self, class: Structure, mask: BinaryMask) -> Result<Self, DatasetError> {
        self.set_mask(class, mask)?;
        Ok(self)
    }

    pub fn set_mask(&mut self, class: Structure, mask: BinaryMask) -> Result<(), DatasetError> {
        if mask.width() != self.width || mask.height() != self.height {
            return Err(DatasetError::ShapeMismatch(self.id));
        }
        self.masks.insert(class, mask);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self, class: Structure) -> Option<&BinaryMask> {
        self.masks.get(&class)
    }

    pub fn contains(&self, class: Structure) -> bool {
        self.masks.get(&class).is_some_and(|m| !m.is_clear())
    }

    pub fn is_background(&self) -> bool {
        Structure::ALL.iter().all(|&c| !self.contains(c))
    }

    pub fn has(&self, class: SampleClass) -> bool {
        match class.structure() {
            Some(s) => self.contains(s),
            None => self.is_background(),
        }
    }

    pub fn annotated_fraction(&self, class: Structure) -> f64 {
        let n = self.masks.get(&class).map_or(0, BinaryMask::count_true);
        n as f64 / (self.width * self.height) as f64
    }

    pub fn entry(&self) -> TileEntry {
        TileEntry {
            id: self.id,
            pseudo: self.pseudo,
            classes: Structure::ALL.into_iter().filter(|&c| self.contains(c)).collect(),
        }
    }
}

/// Serializable summary of a tile.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileEntry {
    pub id: u64,
    pub pseudo: bool,
    pub classes: Vec<Structure>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub pixel_fraction: f64,
    pub tile_count: usize,
}

/// Pixel and tile shares per class. Structure classes may overlap, so their
/// fractions are measured independently; background counts pixels that
/// carry no label at all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub tiles: usize,
    pub shares: BTreeMap<SampleClass, ClassShare>,
}

impl ClassDistribution {
    pub fn share(&self, class: SampleClass) -> ClassShare {
        self.shares.get(&class).copied().unwrap_or_default()
    }
}

pub fn measure_distribution(tiles: &[LabeledTile]) -> ClassDistribution {
    // [background, aguada, building, platform] pixel counts and tile flags, plus the pixel total
    let per_tile: Vec<([u64; 4], [usize; 4], u64)> = tiles
        .par_iter()
        .map(|t| {
            let n = t.width * t.height;
            let mut pixels = [0u64; 4];
            for i in 0..n {
                let mut any = false;
                for c in Structure::ALL {
                    if t.masks.get(&c).is_some_and(|m| m.bits()[i]) {
                        pixels[class_slot(c)] += 1;
                        any = true;
                    }
                }
                if !any {
                    pixels[0] += 1;
                }
            }
            let flags = SampleClass::ALL.map(|c| usize::from(t.has(c)));
            (pixels, flags, n as u64)
        })
        .collect();
    let mut pixels = [0u64; 4];
    let mut counts = [0usize; 4];
    let mut total = 0u64;
    for (p, f, n) in per_tile {
        for k in 0..4 {
            pixels[k] += p[k];
            counts[k] += f[k];
        }
        total += n;
    }
    let shares = SampleClass::ALL
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let pixel_fraction = if total == 0 { 0.0 } else { pixels[k] as f64 / total as f64 };
            (c, ClassShare { pixel_fraction, tile_count: counts[k] })
        })
        .collect();
    ClassDistribution { tiles: tiles.len(), shares }
}

fn class_slot(c: Structure) -> usize {
    SampleClass::ALL.iter().position(|&s| s == SampleClass::from(c)).expect("structure class")
}

/// Relative draw weight per sampling class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerWeights {
    pub background: f64,
    pub aguada: f64,
    pub building: f64,
    pub platform: f64,
}

impl SamplerWeights {
    pub fn equal() -> Self {
        Self { background: 1.0, aguada: 1.0, building: 1.0, platform: 1.0 }
    }

    pub fn custom(background: f64, aguada: f64, building: f64, platform: f64) -> Result<Self, DatasetError> {
        Self { background, aguada, building, platform }.validate()
    }

    pub fn validate(self) -> Result<Self, DatasetError> {
        let w = self.as_array();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|&v| v == 0.0) {
            return Err(DatasetError::InvalidWeights);
        }
        Ok(self)
    }

    pub fn get(&self, class: SampleClass) -> f64 {
        match class {
            SampleClass::Background => self.background,
            SampleClass::Aguada => self.aguada,
            SampleClass::Building => self.building,
            SampleClass::Platform => self.platform,
        }
    }

    fn as_array(&self) -> [f64; 4] {
        SampleClass::ALL.map(|c| self.get(c))
    }
}

impl Default for SamplerWeights {
    fn default() -> Self {
        Self::equal()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draw {
    pub class: SampleClass,
    /// Index into the tile slice.
    pub tile: usize,
}

/// Draws `n` tiles: a class proportional to its weight, then a tile
/// containing that class uniformly.
pub fn weighted_sample(
    tiles: &[LabeledTile],
    weights: &SamplerWeights,
    n: usize,
    seed: u64,
) -> Result<Vec<Draw>, DatasetError> {
    let weights = weights.validate()?;
    let pools: Vec<Vec<usize>> = SampleClass::ALL
        .iter()
        .map(|&c| (0..tiles.len()).filter(|&i| tiles[i].has(c)).collect())
        .collect();
    for (k, &c) in SampleClass::ALL.iter().enumerate() {
        if weights.get(c) > 0.0 && pools[k].is_empty() {
            return Err(DatasetError::UnsatisfiableWeight(c));
        }
    }
    let classes = WeightedIndex::new(weights.as_array()).map_err(|_| DatasetError::InvalidWeights)?;
    let mut rng = stage_rng(seed);
    Ok((0..n)
        .map(|_| {
            let k = classes.sample(&mut rng);
            let pool = &pools[k];
            Draw { class: SampleClass::ALL[k], tile: pool[rng.random_range(0..pool.len())] }
        })
        .collect())
}

/// Repeats every tile containing `class` `factor` times in place.
pub fn oversample(
    tiles: &[LabeledTile],
    class: Structure,
    factor: usize,
) -> Result<Vec<&LabeledTile>, DatasetError> {
    if factor == 0 {
        return Err(DatasetError::InvalidFactor);
    }
    Ok(tiles
        .iter()
        .flat_map(|t| std::iter::repeat_n(t, if t.contains(class) { factor } else { 1 }))
        .collect())
}

/// How tiles are grouped before they are dealt into folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Stratification {
    Unstratified,
    /// Two strata: tiles with and without the class.
    Presence { class: Structure },
    /// Bins of annotated fraction split at ascending `thresholds`; bin `i`
    /// holds fractions in `[t[i-1], t[i])`, the last bin is closed above.
    FractionBins { class: Structure, thresholds: Vec<f64> },
}

impl Stratification {
    pub fn stratum(&self, tile: &LabeledTile) -> usize {
        match self {
            Stratification::Unstratified => 0,
            Stratification::Presence { class } => usize::from(tile.contains(*class)),
            Stratification::FractionBins { class, thresholds } => {
                let f = tile.annotated_fraction(*class);
                thresholds.iter().take_while(|&&t| f >= t).count()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: BTreeMap<u64, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, tile_id: u64) -> Option<usize> {
        self.assignment.get(&tile_id).copied()
    }

    pub fn members(&self, fold: usize) -> Vec<u64> {
        self.assignment.iter().filter(|(_, &f)| f == fold).map(|(&id, _)| id).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles each stratum with the seed and deals it round-robin. The dealer
/// position carries over between strata so the overall fold sizes stay
/// balanced too.
pub fn stratified_kfold(
    tiles: &[LabeledTile],
    k: usize,
    strategy: &Stratification,
    seed: u64,
) -> Result<FoldAssignment, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidFoldCount(k));
    }
    if tiles.len() < k {
        return Err(DatasetError::TooFewTiles { tiles: tiles.len(), k });
    }
    let mut strata: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for t in tiles {
        strata.entry(strategy.stratum(t)).or_default().push(t.id);
    }
    let mut rng = stage_rng(seed);
    let mut assignment = BTreeMap::new();
    let mut next = 0;
    for ids in strata.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for &id in ids.iter() {
            assignment.insert(id, next);
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, assignment })
}

/// Top-left corners of every in-bounds `side x side` window whose annotated
/// fraction strictly exceeds `min_fraction`, in raster order.
pub fn valid_crop_positions(
    mask: &BinaryMask,
    side: usize,
    min_fraction: f64,
) -> Result<Vec<(usize, usize)>, DatasetError> {
    let (w, h) = (mask.width(), mask.height());
    if side == 0 || side > w || side > h {
        return Err(DatasetError::CropTooLarge { crop: side, width: w, height: h });
    }
    // summed-area table with a zero border row and column
    let mut sat = vec![0u64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += u64::from(mask.get(x, y));
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let at = |x: usize, y: usize| sat[y * (w + 1) + x];
    let need = min_fraction * (side * side) as f64;
    let mut out = Vec::new();
    for y in 0..=h - side {
        for x in 0..=w - side {
            let n = at(x + side, y + side) + at(x, y) - at(x + side, y) - at(x, y + side);
            if n as f64 > need {
                out.push((x, y));
            }
        }
    }
    Ok(out)
}

/// Picks a crop corner uniformly among [`valid_crop_positions`].
pub fn crop_position_sampler<R: Rng + ?Sized>(
    mask: &BinaryMask,
    side: usize,
    min_fraction: f64,
    rng: &mut R,
) -> Result<(usize, usize), DatasetError> {
    let valid = valid_crop_positions(mask, side, min_fraction)?;
    if valid.is_empty() {
        return Err(DatasetError::NoValidPosition);
    }
    Ok(valid[rng.random_range(0..valid.len())])
}

/// Appends `unlabeled` tiles labeled by thresholding their probability maps.
/// Every unlabeled tile needs a map for every class.
pub fn pseudo_label_merge(
    train: &[LabeledTile],
    unlabeled: &[u64],
    prob_maps: &BTreeMap<(u64, Structure), ProbMap>,
    threshold: ProbabilityThreshold,
) -> Result<Vec<LabeledTile>, DatasetError> {
    let mut out = train.to_vec();
    for &tile_id in unlabeled {
        let mut tile: Option<LabeledTile> = None;
        for class in Structure::ALL {
            let prob = prob_maps.get(&(tile_id, class)).ok_or(DatasetError::MissingProbMap { tile_id, class })?;
            let t = tile.get_or_insert_with(|| {
                let mut t = LabeledTile::new(tile_id, prob.width(), prob.height());
                t.pseudo = true;
                t
            });
            t.set_mask(class, binarize(prob, threshold))?;
        }
        out.extend(tile);
    }
    Ok(out)
}
