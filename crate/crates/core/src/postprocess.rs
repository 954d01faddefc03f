//! Probability maps to final masks: quantized thresholding, connected
//! component blob filtering with a separate limit for objects on the tile
//! border, and hole filling.
//!
//! Objects are 8-connected; background (for hole detection) is 4-connected,
//! the usual complementary pair.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::mask::{BinaryMask, ProbMap};
use crate::Structure;

/// Quantizes a probability onto the 0..=255 grey scale (round half up).
pub fn quantize(p: f32) -> u8 {
    (f64::from(p) * 255.0).round().clamp(0.0, 255.0) as u8
}

/// A probability threshold expressed as a grey level `T`: a pixel is kept
/// iff its quantized probability is at least `T`.
///
/// A fractional threshold `t` becomes `T = round_half_up(255 t)`, so
/// `t = 0.5` gives `T = 128`: the model must be surer than `127/255 ≈ 49.8 %`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProbabilityThreshold(u8);

impl ProbabilityThreshold {
    pub fn from_level(level: u8) -> Self {
        Self(level)
    }

    /// `t` is clamped to `[0, 1]`.
    pub fn from_fraction(t: f64) -> Self {
        Self((255.0 * t.clamp(0.0, 1.0) + 0.5).floor() as u8)
    }

    pub fn level(self) -> u8 {
        self.0
    }

    /// Smallest kept confidence, `T / 255`.
    pub fn min_admitted_fraction(self) -> f64 {
        f64::from(self.0) / 255.0
    }

    /// Largest rejected confidence, `(T - 1) / 255`; `None` when nothing is rejected.
    pub fn max_rejected_fraction(self) -> Option<f64> {
        self.0.checked_sub(1).map(|l| f64::from(l) / 255.0)
    }

    pub fn admits(self, p: f32) -> bool {
        quantize(p) >= self.0
    }
}

pub fn binarize(prob: &ProbMap, threshold: ProbabilityThreshold) -> BinaryMask {
    let bits = prob.values().iter().map(|&p| threshold.admits(p)).collect();
    BinaryMask::from_bits(prob.width(), prob.height(), bits).expect("shape from a valid map")
}

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }
}

/// An 8-connected set of true pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    /// Linear indices `y * width + x`, ascending.
    pub pixels: Vec<usize>,
    pub bbox: BBox,
    pub touches_boundary: bool,
}

impl Region {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// First pixel in raster order.
    pub fn anchor(&self) -> usize {
        self.pixels[0]
    }
}

fn neighbors8(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let xs = x.saturating_sub(1)..=(x + 1).min(w - 1);
    xs.flat_map(move |nx| (y.saturating_sub(1)..=(y + 1).min(h - 1)).map(move |ny| (nx, ny)))
        .filter(move |&(nx, ny)| nx != x || ny != y)
}

fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut n = [None; 4];
    if x > 0 {
        n[0] = Some((x - 1, y));
    }
    if x + 1 < w {
        n[1] = Some((x + 1, y));
    }
    if y > 0 {
        n[2] = Some((x, y - 1));
    }
    if y + 1 < h {
        n[3] = Some((x, y + 1));
    }
    n.into_iter().flatten()
}

/// 8-connected regions of true pixels, ordered by their first pixel in raster order.
pub fn connected_components(mask: &BinaryMask) -> Vec<Region> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut seen = vec![false; bits.len()];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..bits.len() {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        let mut bbox = BBox { x0: start % w, y0: start / w, x1: start % w, y1: start / w };
        while let Some(i) = queue.pop_front() {
            pixels.push(i);
            let (x, y) = (i % w, i / w);
            bbox.x0 = bbox.x0.min(x);
            bbox.x1 = bbox.x1.max(x);
            bbox.y0 = bbox.y0.min(y);
            bbox.y1 = bbox.y1.max(y);
            for (nx, ny) in neighbors8(x, y, w, h) {
                let j = ny * w + nx;
                if bits[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        pixels.sort_unstable();
        let touches_boundary = bbox.x0 == 0 || bbox.y0 == 0 || bbox.x1 == w - 1 || bbox.y1 == h - 1;
        regions.push(Region { pixels, bbox, touches_boundary });
    }
    regions
}

/// Removes interior regions smaller than `min_area` and border-touching
/// regions smaller than `min_area_boundary`.
pub fn blob_filter(mask: &BinaryMask, min_area: usize, min_area_boundary: usize) -> BinaryMask {
    let mut out = mask.clone();
    for region in connected_components(mask) {
        let limit = if region.touches_boundary { min_area_boundary } else { min_area };
        if region.area() < limit {
            for &i in &region.pixels {
                out.bits_mut()[i] = false;
            }
        }
    }
    out
}

/// Sets every false pixel that is not 4-connected to the tile border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut outside = vec![false; bits.len()];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let on_border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            let i = y * w + x;
            if on_border && !bits[i] && !outside[i] {
                outside[i] = true;
                queue.push_back(i);
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        for (nx, ny) in neighbors4(i % w, i / w, w, h) {
            let j = ny * w + nx;
            if !bits[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }
    let filled = outside.iter().map(|&o| !o).collect();
    BinaryMask::from_bits(w, h, filled).expect("same shape")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    pub probability_threshold: f64,
    pub min_area: usize,
    pub min_area_boundary: usize,
    pub fill_holes: bool,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self { probability_threshold: 0.5, min_area: 0, min_area_boundary: 0, fill_holes: false }
    }
}

impl PostprocessConfig {
    pub fn threshold(&self) -> ProbabilityThreshold {
        ProbabilityThreshold::from_fraction(self.probability_threshold)
    }
}

/// One post-processing configuration per structure class.
pub type ClassPostprocessConfig = BTreeMap<Structure, PostprocessConfig>;

/// Binarize, drop small blobs, then optionally fill holes.
pub fn postprocess_pipeline(prob: &ProbMap, config: &PostprocessConfig) -> BinaryMask {
    let mask = binarize(prob, config.threshold());
    let mask = blob_filter(&mask, config.min_area, config.min_area_boundary);
    if config.fill_holes {
        fill_holes(&mask)
    } else {
        mask
    }
}
