//! Predictors, test-time augmentation and vote combination.
//!
//! A [`Predictor`] maps a tile to a probability map for one class. The
//! network models themselves live outside this crate; their saved outputs
//! are read back through [`FileBacked`]. [`HeuristicBaseline`] is a cheap
//! terrain-feature scorer used to exercise the pipeline end to end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugmentError, DihedralElement};
use crate::grid::box_mean;
use crate::mask::{BinaryMask, ProbMap};
use crate::raster::{read_tiff_file, Geometry, MaskMode, ModalityKind, RasterError, TileRecord};
use crate::rng::stage_rng;
use crate::Structure;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no ensemble members")]
    EmptyEnsemble,
    #[error("member maps differ in shape")]
    ShapeMismatch,
    #[error("tile {tile_id} lacks the {kind} modality")]
    MissingModality { tile_id: u64, kind: ModalityKind },
    #[error("{0} is not a probability")]
    InvalidProbability(f32),
    #[error("invalid roster: {0}")]
    InvalidRoster(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

/// Per-class probability source. Implementations must be deterministic and
/// safe to call from several threads.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, tile: &TileRecord, class: Structure) -> Result<ProbMap, EnsembleError>;

    /// One map per requested class; override when classes share work.
    fn predict_classes(&self, tile: &TileRecord, classes: &[Structure]) -> Result<Vec<ProbMap>, EnsembleError> {
        classes.iter().map(|&c| self.predict(tile, c)).collect()
    }
}

/// Output side length: that of the ALS raster when present.
fn output_side(tile: &TileRecord) -> usize {
    tile.get(ModalityKind::Als).map_or(Geometry::default().als_side, |r| r.width())
}

/// Predicts the same probability everywhere.
#[derive(Clone, Debug)]
pub struct Constant {
    name: String,
    value: f32,
}

impl Constant {
    pub fn new(value: f32) -> Result<Self, EnsembleError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(EnsembleError::InvalidProbability(value));
        }
        Ok(Self { name: format!("constant-{value}"), value })
    }
}

impl Predictor for Constant {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, tile: &TileRecord, _class: Structure) -> Result<ProbMap, EnsembleError> {
        let n = output_side(tile);
        Ok(ProbMap::constant(n, n, self.value).expect("checked on construction"))
    }
}

pub fn prob_file_name(tile_id: u64, class: Structure, model: &str) -> String {
    format!("tile_{tile_id}_prob_{class}_{model}.tif")
}

/// Reads `tile_<id>_prob_<class>_<model>.tif` from a directory.
#[derive(Clone, Debug)]
pub struct FileBacked {
    dir: PathBuf,
    model: String,
}

impl FileBacked {
    pub fn new(dir: impl Into<PathBuf>, model: impl Into<String>) -> Self {
        Self { dir: dir.into(), model: model.into() }
    }

    pub fn path(&self, tile_id: u64, class: Structure) -> PathBuf {
        self.dir.join(prob_file_name(tile_id, class, &self.model))
    }
}

pub fn read_prob_map(path: &Path) -> Result<ProbMap, RasterError> {
    let raster = read_tiff_file(path)?;
    let side = raster.width();
    let geometry = Geometry { als_side: side, ..Geometry::default() };
    ModalityKind::Prob(Structure::Aguada).validate(&raster, geometry, MaskMode::Strict)?;
    let values = raster.as_f32().expect("validated float raster").to_vec();
    Ok(ProbMap::new(raster.width(), raster.height(), values).expect("validated range"))
}

impl Predictor for FileBacked {
    fn name(&self) -> &str {
        &self.model
    }

    fn predict(&self, tile: &TileRecord, class: Structure) -> Result<ProbMap, EnsembleError> {
        Ok(read_prob_map(&self.path(tile.tile_id, class))?)
    }
}

/// Linear weights on the three ALS visualizations, squashed by a sigmoid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    /// Applied to `1 - sky-view factor`.
    pub svf: f64,
    pub openness: f64,
    pub slope: f64,
    pub bias: f64,
}

impl ClassWeights {
    fn jitter<R: Rng + ?Sized>(self, rng: &mut R, amount: f64) -> Self {
        let mut f = || 1.0 + rng.random_range(-amount..=amount);
        Self { svf: self.svf * f(), openness: self.openness * f(), slope: self.slope * f(), bias: self.bias * f() }
    }
}

/// Scores each pixel from box-smoothed ALS bands (sky-view factor, positive
/// openness, slope, in that band order).
#[derive(Clone, Debug)]
pub struct HeuristicBaseline {
    name: String,
    pub weights: BTreeMap<Structure, ClassWeights>,
    pub gain: f64,
    pub smoothing_radius: usize,
}

pub const JITTER: f64 = 0.1;

impl HeuristicBaseline {
    pub fn new() -> Self {
        let weights = BTreeMap::from([
            (Structure::Aguada, ClassWeights { svf: 2.0, openness: -4.0, slope: 0.0, bias: 0.8 }),
            (Structure::Building, ClassWeights { svf: -0.5, openness: 3.0, slope: 1.5, bias: 3.0 }),
            (Structure::Platform, ClassWeights { svf: 0.0, openness: 2.75, slope: 1.25, bias: 1.9 }),
        ]);
        Self { name: "heuristic".into(), weights, gain: 8.0, smoothing_radius: 2 }
    }

    /// The default weights each scaled by an independent factor in
    /// `1 ± JITTER` drawn from `seed`.
    pub fn jittered(seed: u64) -> Self {
        let mut rng = stage_rng(seed);
        let mut h = Self::new();
        for w in h.weights.values_mut() {
            *w = w.jitter(&mut rng, JITTER);
        }
        h.name = format!("heuristic-{seed}");
        h
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl Default for HeuristicBaseline {
    fn default() -> Self {
        Self::new()
    }
}

impl Predictor for HeuristicBaseline {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, tile: &TileRecord, class: Structure) -> Result<ProbMap, EnsembleError> {
        Ok(self.predict_classes(tile, &[class])?.remove(0))
    }

    fn predict_classes(&self, tile: &TileRecord, classes: &[Structure]) -> Result<Vec<ProbMap>, EnsembleError> {
        let als = tile
            .get(ModalityKind::Als)
            .ok_or(EnsembleError::MissingModality { tile_id: tile.tile_id, kind: ModalityKind::Als })?;
        if als.bands() < 3 {
            return Err(RasterError::ShapeMismatch {
                kind: ModalityKind::Als,
                expected: format!("{w}x{h}x3", w = als.width(), h = als.height()),
                found: format!("{w}x{h}x{b}", w = als.width(), h = als.height(), b = als.bands()),
            }
            .into());
        }
        let (w, h) = (als.width(), als.height());
        let scale = if als.sample_type() == crate::SampleType::U8 { 255.0 } else { 1.0 };
        let band = |b: usize| {
            let v: Vec<f64> = als.band_values(b).into_iter().map(|v| v / scale).collect();
            box_mean(&v, w, h, self.smoothing_radius)
        };
        let (svf, open, slope) = (band(0), band(1), band(2));
        let zero = ClassWeights { svf: 0.0, openness: 0.0, slope: 0.0, bias: 0.0 };
        Ok(classes
            .iter()
            .map(|class| {
                let cw = self.weights.get(class).copied().unwrap_or(zero);
                let values = (0..w * h)
                    .map(|i| {
                        let z = cw.svf * (1.0 - svf[i]) + cw.openness * open[i] + cw.slope * slope[i] - cw.bias;
                        (1.0 / (1.0 + (-self.gain * z).exp())) as f32
                    })
                    .collect();
                ProbMap::new(w, h, values).expect("sigmoid output in range")
            })
            .collect())
    }
}

/// Mean of the predictions over all 8 dihedral transforms of the inputs,
/// each mapped back by the inverse transform.
pub fn tta_predict(predictor: &dyn Predictor, tile: &TileRecord, class: Structure) -> Result<ProbMap, EnsembleError> {
    Ok(tta_predict_classes(predictor, tile, &[class])?.remove(0))
}

/// [`tta_predict`] for several classes, transforming the inputs once per element.
pub fn tta_predict_classes(
    predictor: &dyn Predictor,
    tile: &TileRecord,
    classes: &[Structure],
) -> Result<Vec<ProbMap>, EnsembleError> {
    if let Some((_, r)) = tile.rasters().find(|(_, r)| !r.is_square()) {
        return Err(AugmentError::NonSquare { width: r.width(), height: r.height() }.into());
    }
    let branches = DihedralElement::ALL
        .par_iter()
        .map(|&e| {
            let moved = tile.map_rasters(|_, r| e.apply_raster(r).expect("square checked"));
            predictor
                .predict_classes(&moved, classes)?
                .iter()
                .map(|p| Ok(e.inverse().apply_prob(p)?))
                .collect::<Result<Vec<_>, EnsembleError>>()
        })
        .collect::<Result<Vec<_>, EnsembleError>>()?;
    (0..classes.len())
        .map(|k| soft_vote(&branches.iter().map(|b| b[k].clone()).collect::<Vec<_>>()))
        .collect()
}

/// Per-pixel mean, summed in member order in f64.
pub fn soft_vote(maps: &[ProbMap]) -> Result<ProbMap, EnsembleError> {
    let first = maps.first().ok_or(EnsembleError::EmptyEnsemble)?;
    if maps.iter().any(|m| !m.same_shape(first)) {
        return Err(EnsembleError::ShapeMismatch);
    }
    let mut sum = vec![0.0f64; first.values().len()];
    for m in maps {
        for (s, &v) in sum.iter_mut().zip(m.values()) {
            *s += f64::from(v);
        }
    }
    let n = maps.len() as f64;
    let values = sum.into_iter().map(|s| ((s / n) as f32).clamp(0.0, 1.0)).collect();
    Ok(ProbMap::new(first.width(), first.height(), values).expect("mean of valid maps"))
}

/// Strict majority per pixel; ties are false.
pub fn hard_vote(masks: &[BinaryMask]) -> Result<BinaryMask, EnsembleError> {
    let first = masks.first().ok_or(EnsembleError::EmptyEnsemble)?;
    if masks.iter().any(|m| !m.same_shape(first)) {
        return Err(EnsembleError::ShapeMismatch);
    }
    let bits = (0..first.len())
        .map(|i| 2 * masks.iter().filter(|m| m.bits()[i]).count() > masks.len())
        .collect();
    Ok(BinaryMask::from_bits(first.width(), first.height(), bits).expect("same shape"))
}

/// How to build a named ensemble member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PredictorSpec {
    Heuristic {
        #[serde(default)]
        jitter_seed: Option<u64>,
    },
    Constant {
        value: f32,
    },
    /// Precomputed maps in `dir`, stored under the member name.
    File {
        dir: PathBuf,
    },
}

impl PredictorSpec {
    pub fn build(&self, name: &str) -> Result<Box<dyn Predictor>, EnsembleError> {
        Ok(match self {
            PredictorSpec::Heuristic { jitter_seed: None } => Box::new(HeuristicBaseline::new().with_name(name)),
            PredictorSpec::Heuristic { jitter_seed: Some(s) } => {
                Box::new(HeuristicBaseline::jittered(*s).with_name(name))
            }
            PredictorSpec::Constant { value } => {
                let mut c = Constant::new(*value)?;
                c.name = name.to_string();
                Box::new(c)
            }
            PredictorSpec::File { dir } => Box::new(FileBacked::new(dir, name)),
        })
    }
}

/// Named models plus the members voting for each class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roster {
    pub models: BTreeMap<String, PredictorSpec>,
    pub members: BTreeMap<Structure, Vec<String>>,
}

impl Roster {
    /// `n` jittered heuristic variants, all voting for every class.
    pub fn heuristic(seed: u64, n: usize) -> Self {
        let models: BTreeMap<String, PredictorSpec> = (0..n)
            .map(|i| {
                let jitter_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                (format!("heuristic-{i}"), PredictorSpec::Heuristic { jitter_seed: Some(jitter_seed) })
            })
            .collect();
        let names: Vec<String> = models.keys().cloned().collect();
        let members = Structure::ALL.into_iter().map(|c| (c, names.clone())).collect();
        Self { models, members }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        for class in Structure::ALL {
            let list = self.members.get(&class).filter(|l| !l.is_empty());
            let list = list.ok_or_else(|| EnsembleError::InvalidRoster(format!("no members for {class}")))?;
            if let Some(m) = list.iter().find(|m| !self.models.contains_key(*m)) {
                return Err(EnsembleError::InvalidRoster(format!("unknown model `{m}` for {class}")));
            }
            if !valid_model_name(list.iter().map(String::as_str)) {
                return Err(EnsembleError::InvalidRoster("model names must match [A-Za-z0-9.-]+".into()));
            }
        }
        Ok(())
    }

    pub fn members_of(&self, class: Structure) -> &[String] {
        self.members.get(&class).map_or(&[], Vec::as_slice)
    }
}

fn valid_model_name<'a>(mut names: impl Iterator<Item = &'a str>) -> bool {
    names.all(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '.'))
}
