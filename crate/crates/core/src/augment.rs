//! Geometric and photometric augmentation.
//!
//! Geometric transforms are applied identically to an image and its masks.
//! Images are resampled bilinearly and masks by nearest neighbour, so masks
//! stay binary. Rotations by multiples of 90 degrees use exact matrices and
//! therefore reproduce the dihedral permutations bit for bit.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, ProbMap};
use crate::raster::{Raster, SampleType, Samples};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("dihedral transforms need a square grid, got {width}x{height}")]
    NonSquare { width: usize, height: usize },
    #[error("image and masks differ in size")]
    ShapeMismatch,
    #[error("crop side {side} exceeds image {width}x{height}")]
    CropTooLarge { side: usize, width: usize, height: usize },
    #[error("photometric transforms need a float32 image")]
    NotFloat,
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("unknown augmentation preset `{0}`")]
    UnknownPreset(String),
}

/// One of the 8 symmetries of the square: `quarter_turns` clockwise
/// rotations followed by an optional horizontal flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DihedralElement {
    pub flip: bool,
    pub quarter_turns: u8,
}

type Mat2 = [[i32; 2]; 2];

fn mat_mul(a: Mat2, b: Mat2) -> Mat2 {
    let mut m = [[0; 2]; 2];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    m
}

impl DihedralElement {
    pub const IDENTITY: DihedralElement = DihedralElement { flip: false, quarter_turns: 0 };

    pub const ALL: [DihedralElement; 8] = [
        DihedralElement { flip: false, quarter_turns: 0 },
        DihedralElement { flip: false, quarter_turns: 1 },
        DihedralElement { flip: false, quarter_turns: 2 },
        DihedralElement { flip: false, quarter_turns: 3 },
        DihedralElement { flip: true, quarter_turns: 0 },
        DihedralElement { flip: true, quarter_turns: 1 },
        DihedralElement { flip: true, quarter_turns: 2 },
        DihedralElement { flip: true, quarter_turns: 3 },
    ];

    pub fn new(flip: bool, quarter_turns: u8) -> Self {
        Self { flip, quarter_turns: quarter_turns % 4 }
    }

    pub fn name(self) -> String {
        let r = format!("r{}", u32::from(self.quarter_turns) * 90);
        if self.flip {
            format!("fh_{r}")
        } else {
            r
        }
    }

    /// Forward map on centred pixel coordinates (x right, y down).
    fn matrix(self) -> Mat2 {
        const R: Mat2 = [[0, -1], [1, 0]];
        const F: Mat2 = [[-1, 0], [0, 1]];
        let mut m = [[1, 0], [0, 1]];
        for _ in 0..self.quarter_turns % 4 {
            m = mat_mul(R, m);
        }
        if self.flip {
            m = mat_mul(F, m);
        }
        m
    }

    fn from_matrix(m: Mat2) -> Self {
        *Self::ALL.iter().find(|e| e.matrix() == m).expect("orthogonal integer matrix")
    }

    /// The element equal to applying `self` and then `next`.
    pub fn then(self, next: DihedralElement) -> DihedralElement {
        Self::from_matrix(mat_mul(next.matrix(), self.matrix()))
    }

    pub fn inverse(self) -> DihedralElement {
        let m = self.matrix();
        Self::from_matrix([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    /// `perm[i]` is the source pixel of output pixel `i` on an `n x n` grid.
    fn permutation(self, n: usize) -> Vec<usize> {
        let m = self.matrix();
        let n2 = n as i64 - 1;
        let mut perm = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                // doubled centred coordinates keep everything integral
                let (cx, cy) = (2 * x as i64 - n2, 2 * y as i64 - n2);
                let sx = i64::from(m[0][0]) * cx + i64::from(m[1][0]) * cy;
                let sy = i64::from(m[0][1]) * cx + i64::from(m[1][1]) * cy;
                perm.push((((sy + n2) / 2) * n as i64 + (sx + n2) / 2) as usize);
            }
        }
        perm
    }

    fn check_square(width: usize, height: usize) -> Result<usize, AugmentError> {
        if width == height {
            Ok(width)
        } else {
            Err(AugmentError::NonSquare { width, height })
        }
    }

    pub fn apply_raster(self, raster: &Raster) -> Result<Raster, AugmentError> {
        let n = Self::check_square(raster.width(), raster.height())?;
        Ok(raster.permute_pixels(n, n, &self.permutation(n)))
    }

    pub fn apply_mask(self, mask: &BinaryMask) -> Result<BinaryMask, AugmentError> {
        let n = Self::check_square(mask.width(), mask.height())?;
        let bits = self.permutation(n).iter().map(|&p| mask.bits()[p]).collect();
        Ok(BinaryMask::from_bits(n, n, bits).expect("same shape"))
    }

    pub fn apply_prob(self, prob: &ProbMap) -> Result<ProbMap, AugmentError> {
        let n = Self::check_square(prob.width(), prob.height())?;
        let values = self.permutation(n).iter().map(|&p| prob.values()[p]).collect();
        Ok(ProbMap::new(n, n, values).expect("same shape and range"))
    }
}

impl std::fmt::Display for DihedralElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationConfig {
    pub p: f64,
    /// Degrees, clockwise.
    pub min_deg: f64,
    pub max_deg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationConfig {
    pub p: f64,
    /// Largest shift per axis as a fraction of the image size.
    pub max_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub p: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropConfig {
    pub min_side: usize,
    pub max_side: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurConfig {
    pub p: f64,
    pub kernel_size: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub p: f64,
    /// Chance of uniform rather than normal noise once noise is applied.
    pub uniform_share: f64,
    pub uniform_max: f64,
    pub normal_std: f64,
}

/// Transforms and their application probabilities. Absent sections are off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub hflip: f64,
    pub vflip: f64,
    /// Replace the flips and rotation by one uniformly drawn dihedral element.
    pub dihedral: bool,
    pub rotation: Option<RotationConfig>,
    pub translation: Option<TranslationConfig>,
    pub scale: Option<ScaleConfig>,
    pub crop: Option<CropConfig>,
    pub blur: Option<BlurConfig>,
    pub noise: Option<NoiseConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Flips, rotation within a quarter turn either way, translation and scale, each at 0.5.
    Standard,
    /// Random crop, flips, free rotation, blur and noise.
    Extended,
    DihedralOnly,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Standard, Preset::Extended, Preset::DihedralOnly];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Standard => "standard",
            Preset::Extended => "extended",
            Preset::DihedralOnly => "dihedral-only",
        }
    }

    pub fn config(self) -> AugmentConfig {
        match self {
            Preset::Standard => AugmentConfig {
                hflip: 0.5,
                vflip: 0.5,
                rotation: Some(RotationConfig { p: 0.5, min_deg: -90.0, max_deg: 90.0 }),
                translation: Some(TranslationConfig { p: 0.5, max_fraction: 0.15 }),
                scale: Some(ScaleConfig { p: 0.5, min: 0.5, max: 1.5 }),
                ..Default::default()
            },
            Preset::Extended => AugmentConfig {
                hflip: 0.5,
                vflip: 0.5,
                crop: Some(CropConfig { min_side: 256, max_side: 400 }),
                rotation: Some(RotationConfig { p: 0.25, min_deg: 0.0, max_deg: 359.0 }),
                blur: Some(BlurConfig { p: 0.25, kernel_size: 11, sigma_min: 0.1, sigma_max: 2.0 }),
                noise: Some(NoiseConfig { p: 0.25, uniform_share: 0.5, uniform_max: 0.1, normal_std: 0.03 }),
                ..Default::default()
            },
            Preset::DihedralOnly => AugmentConfig { dihedral: true, ..Default::default() },
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| AugmentError::UnknownPreset(s.to_string()))
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidConfig(m.to_string()));
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        let range_ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !prob_ok(self.hflip) || !prob_ok(self.vflip) {
            return bad("flip probabilities must lie in [0, 1]");
        }
        if let Some(r) = self.rotation {
            if !prob_ok(r.p) || !range_ok(r.min_deg, r.max_deg) {
                return bad("rotation");
            }
        }
        if let Some(t) = self.translation {
            if !prob_ok(t.p) || !range_ok(0.0, t.max_fraction) || t.max_fraction >= 1.0 {
                return bad("translation");
            }
        }
        if let Some(s) = self.scale {
            if !prob_ok(s.p) || !range_ok(s.min, s.max) || s.min <= 0.0 {
                return bad("scale");
            }
        }
        if let Some(c) = self.crop {
            if c.min_side == 0 || c.min_side > c.max_side {
                return bad("crop");
            }
        }
        if let Some(b) = self.blur {
            if !prob_ok(b.p) || b.kernel_size % 2 == 0 || !range_ok(b.sigma_min, b.sigma_max) || b.sigma_min <= 0.0 {
                return bad("blur");
            }
        }
        if let Some(n) = self.noise {
            if !prob_ok(n.p) || !prob_ok(n.uniform_share) || !range_ok(0.0, n.uniform_max) || !range_ok(0.0, n.normal_std)
            {
                return bad("noise");
            }
        }
        Ok(())
    }
}

fn check_masks(image: &Raster, masks: &[BinaryMask]) -> Result<(), AugmentError> {
    if masks.iter().any(|m| m.width() != image.width() || m.height() != image.height()) {
        return Err(AugmentError::ShapeMismatch);
    }
    Ok(())
}

/// A sampled geometric transform: `dst = c + A (src - c) + t` with `c` the grid centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub a: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl Affine {
    pub const IDENTITY: Affine = Affine { a: [[1.0, 0.0], [0.0, 1.0]], t: [0.0, 0.0] };

    /// Clockwise rotation; multiples of 90 degrees give exact matrices.
    pub fn rotation(deg: f64) -> Self {
        let quarter = deg / 90.0;
        let (s, c) = if quarter == quarter.round() {
            match (quarter as i64).rem_euclid(4) {
                0 => (0.0, 1.0),
                1 => (1.0, 0.0),
                2 => (0.0, -1.0),
                _ => (-1.0, 0.0),
            }
        } else {
            deg.to_radians().sin_cos()
        };
        Affine { a: [[c, -s], [s, c]], t: [0.0, 0.0] }
    }

    pub fn then(self, next: Affine) -> Affine {
        let (a, b) = (next.a, self.a);
        let m = [
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ];
        let t = [
            a[0][0] * self.t[0] + a[0][1] * self.t[1] + next.t[0],
            a[1][0] * self.t[0] + a[1][1] * self.t[1] + next.t[1],
        ];
        Affine { a: m, t }
    }

    fn diag(sx: f64, sy: f64) -> Self {
        Affine { a: [[sx, 0.0], [0.0, sy]], t: [0.0, 0.0] }
    }

    /// Maps output coordinates back to source coordinates.
    fn inverse_map(&self, w: usize, h: usize) -> impl Fn(usize, usize) -> (f64, f64) {
        let a = self.a;
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let t = self.t;
        move |x, y| {
            let (dx, dy) = (x as f64 - cx - t[0], y as f64 - cy - t[1]);
            (cx + inv[0][0] * dx + inv[0][1] * dy, cy + inv[1][0] * dx + inv[1][1] * dy)
        }
    }

    fn is_identity(&self) -> bool {
        *self == Affine::IDENTITY
    }
}

impl From<DihedralElement> for Affine {
    fn from(e: DihedralElement) -> Self {
        let m = e.matrix();
        Affine { a: m.map(|r| r.map(f64::from)), t: [0.0, 0.0] }
    }
}

const DOMAIN_EPS: f64 = 1e-9;

/// Applies `transform` to `image` (bilinear) and `masks` (nearest).
/// Pixels mapped from outside the source become 0 / false.
pub fn warp(image: &Raster, masks: &[BinaryMask], transform: &Affine) -> Result<(Raster, Vec<BinaryMask>), AugmentError> {
    check_masks(image, masks)?;
    if transform.is_identity() {
        return Ok((image.clone(), masks.to_vec()));
    }
    let (w, h, bands) = (image.width(), image.height(), image.bands());
    let map = transform.inverse_map(w, h);
    let inside = |v: f64, n: usize| v >= -DOMAIN_EPS && v <= n as f64 - 1.0 + DOMAIN_EPS;

    let mut out = vec![0.0f64; w * h * bands];
    let mut nearest: Vec<Option<usize>> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map(x, y);
            if !(inside(sx, w) && inside(sy, h)) {
                nearest.push(None);
                continue;
            }
            let (sx, sy) = (sx.clamp(0.0, (w - 1) as f64), sy.clamp(0.0, (h - 1) as f64));
            nearest.push(Some((sy + 0.5).floor().min((h - 1) as f64) as usize * w + (sx + 0.5).floor().min((w - 1) as f64) as usize));
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            for b in 0..bands {
                let v = if fx == 0.0 && fy == 0.0 {
                    image.get(x0, y0, b)
                } else {
                    let top = image.get(x0, y0, b) * (1.0 - fx) + image.get(x1, y0, b) * fx;
                    let bottom = image.get(x0, y1, b) * (1.0 - fx) + image.get(x1, y1, b) * fx;
                    top * (1.0 - fy) + bottom * fy
                };
                out[(y * w + x) * bands + b] = v;
            }
        }
    }
    let samples = match image.sample_type() {
        SampleType::U8 => Samples::U8(out.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect()),
        SampleType::F32 => Samples::F32(out.iter().map(|&v| v as f32).collect()),
    };
    let warped = if image.has_fill_values() {
        Raster::with_fill_values(w, h, bands, samples)
    } else {
        Raster::new(w, h, bands, samples)
    }
    .expect("finite resampled values");
    let masks = masks
        .iter()
        .map(|m| {
            let bits = nearest.iter().map(|n| n.is_some_and(|i| m.bits()[i])).collect();
            BinaryMask::from_bits(w, h, bits).expect("same shape")
        })
        .collect();
    Ok((warped, masks))
}

/// Draws the geometric part of `config`. Random numbers are consumed in a
/// fixed order so a given seed always yields the same transform.
pub fn sample_affine<R: Rng + ?Sized>(config: &AugmentConfig, width: usize, height: usize, rng: &mut R) -> Affine {
    let mut m = Affine::IDENTITY;
    if config.dihedral {
        let e = DihedralElement::ALL[rng.random_range(0..8)];
        m = m.then(e.into());
    } else {
        if rng.random_bool(config.hflip) {
            m = m.then(Affine::diag(-1.0, 1.0));
        }
        if rng.random_bool(config.vflip) {
            m = m.then(Affine::diag(1.0, -1.0));
        }
    }
    if let Some(r) = config.rotation {
        if rng.random_bool(r.p) {
            m = m.then(Affine::rotation(uniform(rng, r.min_deg, r.max_deg)));
        }
    }
    if let Some(s) = config.scale {
        if rng.random_bool(s.p) {
            let k = uniform(rng, s.min, s.max);
            m = m.then(Affine::diag(k, k));
        }
    }
    if let Some(t) = config.translation {
        if rng.random_bool(t.p) {
            let tx = uniform(rng, -t.max_fraction, t.max_fraction) * width as f64;
            let ty = uniform(rng, -t.max_fraction, t.max_fraction) * height as f64;
            m.t = [m.t[0] + tx, m.t[1] + ty];
        }
    }
    m
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn geometric_augment<R: Rng + ?Sized>(
    image: &Raster,
    masks: &[BinaryMask],
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<(Raster, Vec<BinaryMask>), AugmentError> {
    config.validate()?;
    check_masks(image, masks)?;
    let affine = sample_affine(config, image.width(), image.height(), rng);
    warp(image, masks, &affine)
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Separable blur of every band of a float image.
pub fn gaussian_blur(image: &Raster, kernel_size: usize, sigma: f64) -> Result<Raster, AugmentError> {
    let data = image.as_f32().ok_or(AugmentError::NotFloat)?;
    let (w, h, bands) = (image.width(), image.height(), image.bands());
    let k = gaussian_kernel(kernel_size, sigma);
    let r = (kernel_size / 2) as isize;
    let mut tmp = vec![0.0f64; data.len()];
    for y in 0..h {
        for x in 0..w {
            for b in 0..bands {
                tmp[(y * w + x) * bands + b] = k
                    .iter()
                    .enumerate()
                    .map(|(j, &kj)| kj * f64::from(data[(y * w + reflect101(x as isize + j as isize - r, w)) * bands + b]))
                    .sum();
            }
        }
    }
    let mut out = vec![0.0f32; data.len()];
    for y in 0..h {
        for x in 0..w {
            for b in 0..bands {
                let v: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(j, &kj)| kj * tmp[(reflect101(y as isize + j as isize - r, h) * w + x) * bands + b])
                    .sum();
                out[(y * w + x) * bands + b] = v as f32;
            }
        }
    }
    Raster::from_f32(w, h, bands, out).map_err(|_| AugmentError::NotFloat)
}

/// Blur and additive noise on a float image; masks are never touched.
pub fn photometric_augment<R: Rng + ?Sized>(
    image: &Raster,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<Raster, AugmentError> {
    config.validate()?;
    if image.sample_type() != SampleType::F32 {
        return Err(AugmentError::NotFloat);
    }
    let mut out = image.clone();
    if let Some(b) = config.blur {
        if rng.random_bool(b.p) {
            let sigma = uniform(rng, b.sigma_min, b.sigma_max);
            out = gaussian_blur(&out, b.kernel_size, sigma)?;
        }
    }
    if let Some(n) = config.noise {
        if rng.random_bool(n.p) {
            let use_uniform = rng.random_bool(n.uniform_share);
            let normal = Normal::new(0.0, n.normal_std).expect("validated std");
            let noisy: Vec<f32> = out
                .as_f32()
                .expect("float image")
                .iter()
                .map(|&v| {
                    let e = if use_uniform { uniform(rng, 0.0, n.uniform_max) } else { normal.sample(rng) };
                    (f64::from(v) + e).clamp(0.0, 1.0) as f32
                })
                .collect();
            out = Raster::from_f32(out.width(), out.height(), out.bands(), noisy).expect("same shape");
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropWindow {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

/// Square crop with side uniform in `[min_side, max_side]` (the upper end
/// clamped to the image) at a uniform in-bounds position.
pub fn random_crop<R: Rng + ?Sized>(
    image: &Raster,
    masks: &[BinaryMask],
    min_side: usize,
    max_side: usize,
    rng: &mut R,
) -> Result<(Raster, Vec<BinaryMask>, CropWindow), AugmentError> {
    check_masks(image, masks)?;
    let (w, h) = (image.width(), image.height());
    let limit = w.min(h);
    if min_side == 0 || min_side > limit || min_side > max_side {
        return Err(AugmentError::CropTooLarge { side: min_side, width: w, height: h });
    }
    let side = rng.random_range(min_side..=max_side.min(limit));
    let x = rng.random_range(0..=w - side);
    let y = rng.random_range(0..=h - side);
    let cropped = image.crop(x, y, side, side).expect("window in bounds");
    let masks = masks
        .iter()
        .map(|m| BinaryMask::from_fn(side, side, |cx, cy| m.get(x + cx, y + cy)).expect("nonempty"))
        .collect();
    Ok((cropped, masks, CropWindow { x, y, side }))
}

/// Full pipeline: crop, geometric, then photometric on float images.
pub fn augment_sample<R: Rng + ?Sized>(
    image: &Raster,
    masks: &[BinaryMask],
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<(Raster, Vec<BinaryMask>), AugmentError> {
    config.validate()?;
    let (mut image, mut masks) = (image.clone(), masks.to_vec());
    if let Some(c) = config.crop {
        let (i, m, _) = random_crop(&image, &masks, c.min_side, c.max_side, rng)?;
        image = i;
        masks = m;
    }
    let (mut image, masks) = geometric_augment(&image, &masks, config, rng)?;
    if image.sample_type() == SampleType::F32 {
        image = photometric_augment(&image, config, rng)?;
    }
    Ok((image, masks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stage_rng;

    fn square(n: usize, bands: usize) -> Raster {
        Raster::from_u8(n, n, bands, (0..n * n * bands).map(|i| (i * 7 % 256) as u8).collect()).unwrap()
    }

    #[test]
    fn quarter_turn_is_clockwise() {
        let r = Raster::from_u8(2, 2, 1, vec![b'a', b'b', b'c', b'd']).unwrap();
        let out = DihedralElement::new(false, 1).apply_raster(&r).unwrap();
        assert_eq!(out.as_u8().unwrap(), b"cadb");
        let f = DihedralElement::new(true, 0).apply_raster(&r).unwrap();
        assert_eq!(f.as_u8().unwrap(), b"badc");
    }

    #[test]
    fn group_laws() {
        let r = square(5, 2);
        for e in DihedralElement::ALL {
            let back = e.inverse().apply_raster(&e.apply_raster(&r).unwrap()).unwrap();
            assert_eq!(back, r, "{e}");
            assert_eq!(e.then(e.inverse()), DihedralElement::IDENTITY);
            for g in DihedralElement::ALL {
                let two = g.apply_raster(&e.apply_raster(&r).unwrap()).unwrap();
                assert_eq!(e.then(g).apply_raster(&r).unwrap(), two);
            }
        }
        assert_eq!(DihedralElement::IDENTITY.apply_raster(&r).unwrap(), r);
        let wide = Raster::from_u8(3, 2, 1, vec![0; 6]).unwrap();
        assert_eq!(
            DihedralElement::IDENTITY.apply_raster(&wide).unwrap_err(),
            AugmentError::NonSquare { width: 3, height: 2 }
        );
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let cfg = AugmentConfig {
            rotation: Some(RotationConfig { p: 0.0, min_deg: 0.0, max_deg: 359.0 }),
            scale: Some(ScaleConfig { p: 0.0, min: 0.5, max: 1.5 }),
            ..Default::default()
        };
        let img = square(6, 3);
        let mask = BinaryMask::from_fn(6, 6, |x, y| x > y).unwrap();
        let (i, m) = geometric_augment(&img, std::slice::from_ref(&mask), &cfg, &mut stage_rng(1)).unwrap();
        assert_eq!(i, img);
        assert_eq!(m, vec![mask]);
    }

    #[test]
    fn multiples_of_ninety_are_exact() {
        let img = Raster::from_f32(7, 7, 1, (0..49).map(|i| i as f32 * 0.013).collect()).unwrap();
        let mask = BinaryMask::from_fn(7, 7, |x, y| x + 2 * y < 6).unwrap();
        for k in 0..4u8 {
            let cfg = AugmentConfig {
                rotation: Some(RotationConfig { p: 1.0, min_deg: 90.0 * f64::from(k), max_deg: 90.0 * f64::from(k) }),
                ..Default::default()
            };
            let (i, m) = geometric_augment(&img, std::slice::from_ref(&mask), &cfg, &mut stage_rng(0)).unwrap();
            let e = DihedralElement::new(false, k);
            assert_eq!(i, e.apply_raster(&img).unwrap());
            assert_eq!(m[0], e.apply_mask(&mask).unwrap());
        }
    }

    #[test]
    fn translation_fills_with_zero() {
        let img = Raster::from_u8(4, 1, 1, vec![10, 20, 30, 40]).unwrap();
        let shift = Affine { t: [1.0, 0.0], ..Affine::IDENTITY };
        let (i, m) = warp(&img, &[BinaryMask::filled(4, 1, true).unwrap()], &shift).unwrap();
        assert_eq!(i.as_u8().unwrap(), &[0, 10, 20, 30]);
        assert_eq!(m[0].bits(), &[false, true, true, true]);
    }

    #[test]
    fn kernel_is_normalized() {
        for sigma in [0.1, 0.7, 2.0] {
            let k = gaussian_kernel(11, sigma);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(k.len(), 11);
        }
        assert_eq!((0..6).map(|i| reflect101(i - 2, 3)).collect::<Vec<_>>(), vec![2, 1, 0, 1, 2, 1]);
    }

    #[test]
    fn blur_keeps_constant_images() {
        let img = Raster::from_f32(9, 6, 2, vec![0.4; 108]).unwrap();
        for sigma in [0.1, 2.0] {
            let out = gaussian_blur(&img, 11, sigma).unwrap();
            assert!(out.as_f32().unwrap().iter().all(|&v| (v - 0.4).abs() < 1e-6));
        }
        assert_eq!(gaussian_blur(&square(3, 1), 11, 1.0).unwrap_err(), AugmentError::NotFloat);
    }

    #[test]
    fn crop_bounds() {
        let img = square(8, 1);
        let mask = BinaryMask::from_fn(8, 8, |x, _| x < 3).unwrap();
        let (i, m, win) = random_crop(&img, std::slice::from_ref(&mask), 8, 10, &mut stage_rng(3)).unwrap();
        assert_eq!((i, win), (img.clone(), CropWindow { x: 0, y: 0, side: 8 }));
        assert_eq!(m[0], mask);
        assert!(matches!(random_crop(&img, &[], 9, 10, &mut stage_rng(3)), Err(AugmentError::CropTooLarge { .. })));
        let (_, m, _) = random_crop(&img, std::slice::from_ref(&mask), 2, 6, &mut stage_rng(4)).unwrap();
        assert!(m[0].count_true() <= mask.count_true());
    }

    #[test]
    fn presets_validate_and_parse() {
        for p in Preset::ALL {
            p.config().validate().unwrap();
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("nope".parse::<Preset>().is_err());
        let bad = AugmentConfig { hflip: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
