//! IoU scoring and leaderboards.
//!
//! A tile where both prediction and ground truth are empty scores 1.0; the
//! same convention resolves every 0/0 ratio in [`SegMetrics`]. Dataset
//! scores average per tile, then over the three classes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;
use crate::preprocess::{mask_decode, PreprocessError};
use crate::raster::{read_tiff_file, MaskMode, RasterError};
use crate::Structure;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and ground truth differ in shape")]
    ShapeMismatch,
    #[error("tile {tile_id} has no score for class {class}")]
    MissingClass { tile_id: u64, class: Structure },
    #[error("nothing to score")]
    EmptyDataset,
    #[error("missing prediction {0}")]
    MissingPrediction(PathBuf),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Mask(#[from] PreprocessError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_masks(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self, EvalError> {
        if !pred.same_shape(gt) {
            return Err(EvalError::ShapeMismatch);
        }
        let mut c = Confusion::default();
        for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }
}

/// `num / den`, with 0/0 read as perfect agreement.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn tile_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, EvalError> {
    let c = Confusion::from_masks(pred, gt)?;
    Ok(ratio(c.tp, c.tp + c.fp + c.fn_))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub iou_pos: f64,
    pub iou_neg: f64,
    pub miou: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub tnr: f64,
    pub fnr: f64,
    pub ppv: f64,
}

impl SegMetrics {
    pub fn from_confusion(c: &Confusion) -> Self {
        let iou_pos = ratio(c.tp, c.tp + c.fp + c.fn_);
        let iou_neg = ratio(c.tn, c.tn + c.fp + c.fn_);
        Self {
            iou_pos,
            iou_neg,
            miou: mean_iou(iou_pos, iou_neg),
            tpr: ratio(c.tp, c.tp + c.fn_),
            fpr: ratio(c.fp, c.fp + c.tn),
            tnr: ratio(c.tn, c.tn + c.fp),
            fnr: ratio(c.fn_, c.tp + c.fn_),
            ppv: ratio(c.tp, c.tp + c.fp),
        }
    }

    /// Field-wise mean; `miou` stays the mean of the two averaged IoUs.
    pub fn mean(items: &[SegMetrics]) -> Option<SegMetrics> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let avg = |f: fn(&SegMetrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        let (iou_pos, iou_neg) = (avg(|m| m.iou_pos), avg(|m| m.iou_neg));
        Some(SegMetrics {
            iou_pos,
            iou_neg,
            miou: mean_iou(iou_pos, iou_neg),
            tpr: avg(|m| m.tpr),
            fpr: avg(|m| m.fpr),
            tnr: avg(|m| m.tnr),
            fnr: avg(|m| m.fnr),
            ppv: avg(|m| m.ppv),
        })
    }
}

pub fn mean_iou(iou_pos: f64, iou_neg: f64) -> f64 {
    (iou_pos + iou_neg) / 2.0
}

pub fn tile_metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<SegMetrics, EvalError> {
    Ok(SegMetrics::from_confusion(&Confusion::from_masks(pred, gt)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub per_class: BTreeMap<Structure, f64>,
    pub overall: f64,
}

/// Per-class means over tiles and their mean.
pub fn dataset_score(per_tile: &BTreeMap<u64, BTreeMap<Structure, f64>>) -> Result<DatasetScore, EvalError> {
    if per_tile.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut per_class = BTreeMap::new();
    for class in Structure::ALL {
        let mut sum = 0.0;
        for (&tile_id, scores) in per_tile {
            sum += scores.get(&class).ok_or(EvalError::MissingClass { tile_id, class })?;
        }
        per_class.insert(class, sum / per_tile.len() as f64);
    }
    Ok(score_from_class_averages(per_class))
}

pub fn score_from_class_averages(per_class: BTreeMap<Structure, f64>) -> DatasetScore {
    let overall = per_class.values().sum::<f64>() / per_class.len() as f64;
    DatasetScore { per_class, overall }
}

/// Half-up rounding to 4 decimals. Values within 1e-9 of a half step
/// (as decimal inputs like 0.81105 usually are) round up.
pub fn round4(v: f64) -> f64 {
    let s = v * 1e4;
    let floor = s.floor();
    let r = if s - floor >= 0.5 - 1e-9 { floor + 1.0 } else { floor };
    r / 1e4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub name: String,
    pub aguadas: f64,
    pub platforms: f64,
    pub buildings: f64,
}

impl LeaderboardEntry {
    pub fn new(name: impl Into<String>, aguadas: f64, platforms: f64, buildings: f64) -> Self {
        Self { name: name.into(), aguadas, platforms, buildings }
    }

    pub fn from_score(name: impl Into<String>, score: &DatasetScore) -> Self {
        let get = |c| score.per_class.get(&c).copied().unwrap_or(0.0);
        Self::new(name, get(Structure::Aguada), get(Structure::Platform), get(Structure::Building))
    }

    pub fn overall(&self) -> f64 {
        (self.aguadas + self.platforms + self.buildings) / 3.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub name: String,
    pub avg_iou: f64,
    pub aguadas: f64,
    pub platforms: f64,
    pub buildings: f64,
}

/// Rows by displayed overall IoU, descending. Entries whose rounded
/// overall is equal share a rank and keep their input order.
pub fn leaderboard(entries: &[LeaderboardEntry]) -> Vec<LeaderboardRow> {
    let mut order: Vec<(usize, f64)> = entries.iter().enumerate().map(|(i, e)| (i, round4(e.overall()))).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut rows: Vec<LeaderboardRow> = Vec::with_capacity(entries.len());
    for (pos, &(i, shown)) in order.iter().enumerate() {
        let rank = match rows.last() {
            Some(prev) if prev.avg_iou == shown => prev.rank,
            _ => pos + 1,
        };
        let e = &entries[i];
        rows.push(LeaderboardRow {
            rank,
            name: e.name.clone(),
            avg_iou: shown,
            aguadas: round4(e.aguadas),
            platforms: round4(e.platforms),
            buildings: round4(e.buildings),
        });
    }
    rows
}

pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let mut out = String::from("rank,name,avg_iou,aguadas,platforms,buildings\n");
    for r in rows {
        let name = if r.name.contains([',', '"', '\n']) {
            format!("\"{}\"", r.name.replace('"', "\"\""))
        } else {
            r.name.clone()
        };
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4}\n",
            r.rank, name, r.avg_iou, r.aguadas, r.platforms, r.buildings
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileScore {
    pub tile_id: u64,
    pub iou: BTreeMap<Structure, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub tiles: usize,
    pub per_class: BTreeMap<Structure, f64>,
    pub overall: f64,
    pub per_tile: Vec<TileScore>,
}

pub fn mask_file_name(tile_id: u64, class: Structure) -> String {
    format!("tile_{tile_id}_mask_{class}.tif")
}

/// Tile ids that have at least one mask file in `dir`.
pub fn mask_tile_ids(dir: &Path) -> Result<BTreeSet<u64>, EvalError> {
    let re = Regex::new(r"^tile_(\d+)_mask_(aguada|building|platform)\.tif$").expect("static pattern");
    let mut ids = BTreeSet::new();
    for entry in std::fs::read_dir(dir).map_err(|e| RasterError::io(dir, e))? {
        let entry = entry.map_err(|e| RasterError::io(dir, e))?;
        if let Some(c) = re.captures(&entry.file_name().to_string_lossy()) {
            if let Ok(id) = c[1].parse() {
                ids.insert(id);
            }
        }
    }
    Ok(ids)
}

fn read_mask(path: &Path) -> Result<BinaryMask, EvalError> {
    Ok(mask_decode(&read_tiff_file(path)?, MaskMode::Strict)?)
}

/// Scores every tile with ground-truth masks in `truth_dir` against the
/// same-named files in `pred_dir`. A class without a ground-truth file is
/// treated as an empty mask.
pub fn score_submission(pred_dir: &Path, truth_dir: &Path) -> Result<ScoreReport, EvalError> {
    let ids: Vec<u64> = mask_tile_ids(truth_dir)?.into_iter().collect();
    if ids.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let per_tile = ids
        .par_iter()
        .map(|&tile_id| {
            let mut iou = BTreeMap::new();
            for class in Structure::ALL {
                let name = mask_file_name(tile_id, class);
                let pred_path = pred_dir.join(&name);
                if !pred_path.is_file() {
                    return Err(EvalError::MissingPrediction(pred_path));
                }
                let pred = read_mask(&pred_path)?;
                let truth_path = truth_dir.join(&name);
                let gt = if truth_path.is_file() {
                    read_mask(&truth_path)?
                } else {
                    BinaryMask::new(pred.width(), pred.height()).expect("nonempty")
                };
                iou.insert(class, tile_iou(&pred, &gt)?);
            }
            Ok(TileScore { tile_id, iou })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let table: BTreeMap<u64, BTreeMap<Structure, f64>> = per_tile.iter().map(|t| (t.tile_id, t.iou.clone())).collect();
    let score = dataset_score(&table)?;
    Ok(ScoreReport { tiles: per_tile.len(), per_class: score.per_class, overall: score.overall, per_tile })
}
