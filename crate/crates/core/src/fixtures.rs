//! Synthetic desk-scale dataset.
//!
//! Each tile gets a random height field with raised platforms, small raised
//! buildings (often on a platform), flat-bottomed aguada depressions and
//! unlabeled mounds as distractors. The three ALS bands are visualizations
//! derived from that height field; Sentinel tiles are random but shaped
//! like the real products. Every fourth tile carries no structure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{box_mean, local_max};
use crate::mask::BinaryMask;
use crate::preprocess::s2::{S2_BANDS_PER_DATE, S2_DATES};
use crate::preprocess::{build_s1_tile, mask_encode, Acquisition, InputScale, Orbit, Polarization, PreprocessError};
use crate::raster::{write_tiff_file, Geometry, ModalityKind, NamingPattern, Raster, RasterError, TileRecord};
use crate::rng::item_rng;
use crate::Structure;

pub const DEFAULT_TILES: usize = 32;
const S1_YEARS: [u16; 4] = [2017, 2018, 2019, 2020];
const S1_PER_YEAR: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub tiles: usize,
    pub seed: u64,
    pub geometry: Geometry,
    /// Also emit the raw single-date Sentinel-1 acquisitions.
    pub raw_s1: bool,
}

impl FixtureConfig {
    pub fn new(tiles: usize, seed: u64) -> Self {
        Self { tiles, seed, geometry: Geometry::default(), raw_s1: false }
    }
}

#[derive(Clone, Debug)]
pub struct FixtureTile {
    /// ALS, S1, S2 and the three encoded masks.
    pub record: TileRecord,
    pub masks: BTreeMap<Structure, BinaryMask>,
    pub s1_acquisitions: Vec<Acquisition>,
}

impl FixtureTile {
    pub fn id(&self) -> u64 {
        self.record.tile_id
    }
}

struct Terrain {
    w: usize,
    h: usize,
    height: Vec<f64>,
    masks: BTreeMap<Structure, BinaryMask>,
}

impl Terrain {
    fn new(w: usize, h: usize) -> Self {
        let masks = Structure::ALL.into_iter().map(|c| (c, BinaryMask::new(w, h).expect("nonempty"))).collect();
        Self { w, h, height: vec![0.0; w * h], masks }
    }

    /// Adds `dz * profile` where `profile` in [0, 1] falls off over `ramp`
    /// pixels inside the rectangle; labels the rectangle.
    fn rect(&mut self, class: Structure, x0: usize, y0: usize, rw: usize, rh: usize, dz: f64, ramp: f64) {
        for y in y0..(y0 + rh).min(self.h) {
            for x in x0..(x0 + rw).min(self.w) {
                let edge = (x - x0 + 1).min(x0 + rw - x).min(y - y0 + 1).min(y0 + rh - y) as f64;
                self.height[y * self.w + x] += dz * (edge / ramp).min(1.0);
                self.masks.get_mut(&class).expect("all classes").set(x, y, true);
            }
        }
    }

    fn pond(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, depth: f64) {
        let ramp = 3.0;
        for y in 0..self.h {
            for x in 0..self.w {
                let d = (((x as f64 - cx) / rx).powi(2) + ((y as f64 - cy) / ry).powi(2)).sqrt();
                if d < 1.0 {
                    let inside = (1.0 - d) * rx.min(ry);
                    self.height[y * self.w + x] -= depth * (inside / ramp).min(1.0);
                    self.masks.get_mut(&Structure::Aguada).expect("all classes").set(x, y, true);
                }
            }
        }
    }

    fn mound(&mut self, cx: f64, cy: f64, radius: f64, dz: f64) {
        let r = (3.0 * radius) as isize;
        for y in (cy as isize - r).max(0)..(cy as isize + r).min(self.h as isize) {
            for x in (cx as isize - r).max(0)..(cx as isize + r).min(self.w as isize) {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                self.height[y as usize * self.w + x as usize] += dz * (-d2 / (2.0 * radius * radius)).exp();
            }
        }
    }

    /// Sky-view factor, positive openness and slope proxies as 8-bit bands.
    fn als(&self) -> Raster {
        let (w, h) = (self.w, self.h);
        let hv = &self.height;
        let max8 = local_max(hv, w, h, 8);
        let mean64 = box_mean(hv, w, h, 64);
        let mut data = Vec::with_capacity(w * h * 3);
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let gx = (hv[y * w + (x + 1).min(w - 1)] - hv[y * w + x.saturating_sub(1)]) / 2.0;
                let gy = (hv[(y + 1).min(h - 1) * w + x] - hv[y.saturating_sub(1) * w + x]) / 2.0;
                data.push(q(1.0 - (max8[i] - hv[i]) / 2.0));
                data.push(q(0.5 + (hv[i] - mean64[i]) / 4.0));
                data.push(q((gx * gx + gy * gy).sqrt() / 0.5));
            }
        }
        Raster::from_u8(w, h, 3, data).expect("consistent buffer")
    }
}

fn generate_terrain<R: Rng + ?Sized>(index: usize, side: usize, rng: &mut R) -> Terrain {
    let mut t = Terrain::new(side, side);
    let s = side as f64;
    for _ in 0..3 {
        let period = rng.random_range(0.3..0.9) * s;
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = rng.random_range(0.1..0.25);
        let (fx, fy) = (angle.cos() / period, angle.sin() / period);
        for y in 0..side {
            for x in 0..side {
                let arg = std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) + phase;
                t.height[y * side + x] += amp * arg.sin();
            }
        }
    }
    for _ in 0..rng.random_range(2..6) {
        let (cx, cy) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        t.mound(cx, cy, rng.random_range(0.012..0.03) * s, rng.random_range(0.4..1.2));
    }
    if index.is_multiple_of(4) {
        return t;
    }

    let (mut platform, mut building, aguada) =
        (rng.random_bool(0.6), rng.random_bool(0.6), rng.random_bool(0.3));
    if !(platform || building || aguada) {
        platform = true;
    }
    let mut pads = Vec::new();
    if platform {
        for _ in 0..rng.random_range(1..3) {
            let (pw, ph) = (rng.random_range(0.1..0.23) * s, rng.random_range(0.1..0.23) * s);
            let (pw, ph) = (pw.max(4.0) as usize, ph.max(4.0) as usize);
            let (x0, y0) = (rng.random_range(0..side - pw), rng.random_range(0..side - ph));
            t.rect(Structure::Platform, x0, y0, pw, ph, 1.5, 4.0);
            pads.push((x0, y0, pw, ph));
        }
    }
    if aguada {
        let (rx, ry) = (rng.random_range(0.04..0.1) * s, rng.random_range(0.04..0.1) * s);
        let (cx, cy) = (rng.random_range(rx..s - rx), rng.random_range(ry..s - ry));
        t.pond(cx, cy, rx.max(2.0), ry.max(2.0), 1.5);
    } else if !platform {
        building = true;
    }
    if building {
        for _ in 0..rng.random_range(1..5) {
            let (bw, bh) = (rng.random_range(0.02..0.075) * s, rng.random_range(0.02..0.075) * s);
            let (bw, bh) = (bw.max(2.0) as usize, bh.max(2.0) as usize);
            let on_pad = !pads.is_empty() && rng.random_bool(0.7);
            let (x0, y0) = if on_pad {
                let (px, py, pw, ph) = pads[rng.random_range(0..pads.len())];
                let x = px + rng.random_range(0..pw.saturating_sub(bw).max(1));
                let y = py + rng.random_range(0..ph.saturating_sub(bh).max(1));
                (x.min(side - bw), y.min(side - bh))
            } else {
                (rng.random_range(0..side - bw), rng.random_range(0..side - bh))
            };
            t.rect(Structure::Building, x0, y0, bw, bh, 2.0, 1.0);
        }
    }
    t
}

fn s1_acquisitions<R: Rng + ?Sized>(side: usize, rng: &mut R) -> Vec<Acquisition> {
    let mut out = Vec::new();
    for polarization in Polarization::ALL {
        for orbit in Orbit::ALL {
            let base_db = match polarization {
                Polarization::Vv => -9.0,
                Polarization::Vh => -16.0,
            };
            for year in S1_YEARS {
                for _ in 0..S1_PER_YEAR {
                    let data = (0..side * side)
                        .map(|_| 10f64.powf((base_db + rng.random_range(-4.0..4.0)) / 10.0) as f32)
                        .collect();
                    let raster = Raster::from_f32(side, side, 1, data).expect("consistent buffer");
                    out.push(Acquisition { polarization, orbit, year, raster });
                }
            }
        }
    }
    out
}

fn s2_stack<R: Rng + ?Sized>(side: usize, rng: &mut R) -> Raster {
    let bands = S2_DATES * S2_BANDS_PER_DATE;
    let cloudy_dates: Vec<bool> = (0..S2_DATES).map(|_| rng.random_bool(0.2)).collect();
    let mut data = Vec::with_capacity(side * side * bands);
    for _ in 0..side * side {
        for &cloudy in &cloudy_dates {
            let cloud = cloudy || rng.random_bool(0.1);
            for _ in 0..S2_BANDS_PER_DATE - 1 {
                data.push(if cloud { rng.random_range(0.6..1.0) } else { rng.random_range(0.02..0.5) });
            }
            data.push(if cloud { 1.0 } else { 0.0 });
        }
    }
    Raster::from_f32(side, side, bands, data).expect("consistent buffer")
}

pub fn generate_tile(config: &FixtureConfig, index: usize) -> Result<FixtureTile, PreprocessError> {
    let mut rng = item_rng(config.seed, index as u64);
    let g = config.geometry;
    let terrain = generate_terrain(index, g.als_side, &mut rng);
    let acquisitions = s1_acquisitions(g.sentinel_side, &mut rng);
    let s1 = build_s1_tile(&acquisitions, InputScale::LinearSigma0)?;
    let s2 = s2_stack(g.sentinel_side, &mut rng);

    let mut record = TileRecord::new(index as u64);
    record.insert(ModalityKind::Als, terrain.als())?;
    record.insert(ModalityKind::S1, s1)?;
    record.insert(ModalityKind::S2, s2)?;
    for (&class, mask) in &terrain.masks {
        record.insert(ModalityKind::Mask(class), mask_encode(mask))?;
    }
    Ok(FixtureTile {
        record,
        masks: terrain.masks,
        s1_acquisitions: if config.raw_s1 { acquisitions } else { Vec::new() },
    })
}

/// Tiles `0..config.tiles`, generated in parallel from per-tile streams.
pub fn generate_fixtures(config: &FixtureConfig) -> Result<Vec<FixtureTile>, PreprocessError> {
    (0..config.tiles).into_par_iter().map(|i| generate_tile(config, i)).collect()
}

pub fn raw_s1_file_name(tile_id: u64, a: &Acquisition, k: usize) -> String {
    let pol = match a.polarization {
        Polarization::Vv => "vv",
        Polarization::Vh => "vh",
    };
    let orbit = match a.orbit {
        Orbit::Ascending => "asc",
        Orbit::Descending => "desc",
    };
    format!("tile_{tile_id}_s1raw_{pol}_{orbit}_{}_{k}.tif", a.year)
}

/// Writes every raster with the default naming pattern, plus raw S1
/// acquisitions under `raw_s1/` when present. Returns the written paths.
pub fn write_fixtures(dir: &Path, tiles: &[FixtureTile]) -> Result<Vec<PathBuf>, RasterError> {
    std::fs::create_dir_all(dir).map_err(|e| RasterError::io(dir, e))?;
    let pattern = NamingPattern::default();
    let written: Vec<Vec<PathBuf>> = tiles
        .par_iter()
        .map(|t| {
            let mut paths = Vec::new();
            for (kind, raster) in t.record.rasters() {
                let path = dir.join(pattern.file_name(t.id(), &kind.token()));
                write_tiff_file(&path, raster)?;
                paths.push(path);
            }
            if !t.s1_acquisitions.is_empty() {
                let raw = dir.join("raw_s1");
                std::fs::create_dir_all(&raw).map_err(|e| RasterError::io(&raw, e))?;
                for (k, a) in t.s1_acquisitions.iter().enumerate() {
                    let path = raw.join(raw_s1_file_name(t.id(), a, k));
                    write_tiff_file(&path, &a.raster)?;
                    paths.push(path);
                }
            }
            Ok(paths)
        })
        .collect::<Result<_, RasterError>>()?;
    Ok(written.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::MaskMode;

    fn small() -> FixtureConfig {
        FixtureConfig { geometry: Geometry { sentinel_side: 4, als_side: 64 }, ..FixtureConfig::new(8, 42) }
    }

    #[test]
    fn tiles_validate_and_repeat() {
        let cfg = small();
        let a = generate_fixtures(&cfg).unwrap();
        let b = generate_fixtures(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.record, y.record);
            for (kind, r) in x.record.rasters() {
                kind.validate(r, cfg.geometry, MaskMode::Strict).unwrap();
            }
        }
        for t in &a {
            let labeled = t.masks.values().any(|m| !m.is_clear());
            assert_eq!(labeled, t.id() % 4 != 0, "tile {}", t.id());
        }
    }
}
