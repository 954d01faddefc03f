//! Copy-paste generation of synthetic training tiles.
//!
//! One structure instance (an 8-connected component of a class mask) is cut
//! from a donor tile in one of three styles and pasted at a uniformly random
//! in-bounds position of an empty background tile. The generated mask is
//! exactly the donor footprint translated to the paste position.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;
use crate::postprocess::connected_components;
use crate::raster::Raster;
use crate::rng::item_rng;
use crate::Structure;

pub const MAX_PADDING: u8 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("mask has no structure pixels to extract")]
    EmptyMask,
    #[error("padding must be between 1 and {MAX_PADDING}, got {0}")]
    InvalidPadding(u8),
    #[error("patch {patch_w}x{patch_h} does not fit into background {bg_w}x{bg_h}")]
    PatchTooLarge { patch_w: usize, patch_h: usize, bg_w: usize, bg_h: usize },
    #[error("background mask is not empty")]
    BackgroundNotEmpty,
    #[error("image and mask shapes differ")]
    ShapeMismatch,
    #[error("patch and background differ in band count or sample type")]
    BandMismatch,
    #[error("no donor tiles contain the class")]
    NoDonors,
    #[error("no empty background tiles")]
    NoBackgrounds,
    #[error("instances per sample must be at least 1")]
    NoInstances,
}

/// How an instance is cut out of its donor tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "style", content = "padding")]
pub enum CropStyle {
    /// The component's bounding box; the whole box is labeled.
    RectangularCropped,
    /// Exactly the component's pixels.
    PixelPreciseCropped,
    /// The component dilated by `n` pixels (Chebyshev), so some surrounding
    /// terrain comes along; only the component itself is labeled.
    Padded(u8),
}

impl CropStyle {
    pub fn validate(self) -> Result<Self, SynthError> {
        match self {
            CropStyle::Padded(n) if n == 0 || n > MAX_PADDING => Err(SynthError::InvalidPadding(n)),
            s => Ok(s),
        }
    }

    pub fn name(self) -> String {
        match self {
            CropStyle::RectangularCropped => "rectangular".into(),
            CropStyle::PixelPreciseCropped => "pixel-precise".into(),
            CropStyle::Padded(n) => format!("padded:{n}"),
        }
    }
}

impl std::str::FromStr for CropStyle {
    type Err = String;

    /// Accepts `rectangular`, `pixel-precise` and `padded:<n>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rectangular" | "rectangular-cropped" => Ok(CropStyle::RectangularCropped),
            "pixel-precise" | "pixel-precise-cropped" => Ok(CropStyle::PixelPreciseCropped),
            _ => {
                let n = s
                    .strip_prefix("padded:")
                    .or_else(|| s.strip_prefix("padded-"))
                    .ok_or_else(|| format!("unknown crop style `{s}`"))?;
                let n: u8 = n.parse().map_err(|_| format!("bad padding in `{s}`"))?;
                CropStyle::Padded(n).validate().map_err(|e| e.to_string())
            }
        }
    }
}

/// An instance cut from a donor tile.
///
/// `extent` marks the patch pixels that get pasted and `footprint` the pixels
/// that get labeled; both share the patch grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub pixels: Raster,
    pub extent: BinaryMask,
    pub footprint: BinaryMask,
    pub source_tile: u64,
    /// Top-left corner of the patch within the donor tile.
    pub source_origin: (usize, usize),
    pub style: CropStyle,
}

impl Patch {
    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }
}

/// Cuts one uniformly chosen 8-connected component out of `image`.
pub fn extract_instance<R: Rng + ?Sized>(
    image: &Raster,
    mask: &BinaryMask,
    style: CropStyle,
    source_tile: u64,
    rng: &mut R,
) -> Result<Patch, SynthError> {
    let style = style.validate()?;
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(SynthError::ShapeMismatch);
    }
    let components = connected_components(mask);
    if components.is_empty() {
        return Err(SynthError::EmptyMask);
    }
    let component = &components[rng.random_range(0..components.len())];
    let (w, h) = (mask.width(), mask.height());
    let pad = match style {
        CropStyle::Padded(n) => usize::from(n),
        _ => 0,
    };
    let b = component.bbox;
    let (x0, y0) = (b.x0.saturating_sub(pad), b.y0.saturating_sub(pad));
    let (x1, y1) = ((b.x1 + pad).min(w - 1), (b.y1 + pad).min(h - 1));
    let (pw, ph) = (x1 - x0 + 1, y1 - y0 + 1);

    let mut footprint = BinaryMask::new(pw, ph).expect("nonempty patch");
    for &i in &component.pixels {
        footprint.set(i % w - x0, i / w - y0, true);
    }
    let extent = match style {
        CropStyle::RectangularCropped => {
            footprint = BinaryMask::filled(pw, ph, true).expect("nonempty patch");
            footprint.clone()
        }
        CropStyle::PixelPreciseCropped => footprint.clone(),
        CropStyle::Padded(_) => dilate_chebyshev(&footprint, pad),
    };

    let mut pixels = image.crop(x0, y0, pw, ph).expect("window inside the donor");
    let mut blank = Raster::zeros(pw, ph, image.bands(), image.sample_type()).expect("nonempty patch");
    for (x, y) in extent.true_pixels() {
        blank.copy_pixel_from(x, y, &pixels, x, y);
    }
    pixels = blank;

    Ok(Patch { pixels, extent, footprint, source_tile, source_origin: (x0, y0), style })
}

/// Dilation by a `(2r+1)`-square structuring element, clipped to the grid.
fn dilate_chebyshev(mask: &BinaryMask, r: usize) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = BinaryMask::new(w, h).expect("nonempty");
    for (x, y) in mask.true_pixels() {
        for ny in y.saturating_sub(r)..=(y + r).min(h - 1) {
            for nx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                out.set(nx, ny, true);
            }
        }
    }
    out
}

/// Result of pasting one patch.
#[derive(Clone, Debug, PartialEq)]
pub struct Pasted {
    pub image: Raster,
    pub mask: BinaryMask,
    /// Top-left corner of the patch within the background.
    pub position: (usize, usize),
}

/// Pastes `patch` at a uniformly random position where it lies fully inside
/// `background`, which must carry an empty mask.
pub fn paste<R: Rng + ?Sized>(
    background: &Raster,
    bg_mask: &BinaryMask,
    patch: &Patch,
    rng: &mut R,
) -> Result<Pasted, SynthError> {
    if !bg_mask.is_clear() {
        return Err(SynthError::BackgroundNotEmpty);
    }
    paste_over(background, bg_mask, patch, rng)
}

/// Like [`paste`] but over a possibly labeled background: labels under the
/// pasted extent are replaced by the patch footprint.
fn paste_over<R: Rng + ?Sized>(
    background: &Raster,
    bg_mask: &BinaryMask,
    patch: &Patch,
    rng: &mut R,
) -> Result<Pasted, SynthError> {
    if background.width() != bg_mask.width() || background.height() != bg_mask.height() {
        return Err(SynthError::ShapeMismatch);
    }
    if background.bands() != patch.pixels.bands() || background.sample_type() != patch.pixels.sample_type() {
        return Err(SynthError::BandMismatch);
    }
    let (bw, bh, pw, ph) = (background.width(), background.height(), patch.width(), patch.height());
    if pw > bw || ph > bh {
        return Err(SynthError::PatchTooLarge { patch_w: pw, patch_h: ph, bg_w: bw, bg_h: bh });
    }
    let px = rng.random_range(0..=bw - pw);
    let py = rng.random_range(0..=bh - ph);
    let mut image = background.clone();
    let mut mask = bg_mask.clone();
    for (x, y) in patch.extent.true_pixels() {
        image.copy_pixel_from(px + x, py + y, &patch.pixels, x, y);
        mask.set(px + x, py + y, patch.footprint.get(x, y));
    }
    Ok(Pasted { image, mask, position: (px, py) })
}

/// A tile offered to the generator: an image plus its mask for the target class.
#[derive(Clone, Debug)]
pub struct SourceTile {
    pub id: u64,
    pub image: Raster,
    pub mask: BinaryMask,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub donor_id: u64,
    /// Patch origin within the donor.
    pub source_x: usize,
    pub source_y: usize,
    pub width: usize,
    pub height: usize,
    /// Patch origin within the generated tile.
    pub x: usize,
    pub y: usize,
    pub footprint_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub background_id: u64,
    pub placements: Vec<Placement>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub class: Structure,
    pub style: CropStyle,
    pub count: usize,
    pub seed: u64,
    pub instances_per_sample: usize,
    pub samples: Vec<SampleRecord>,
}

#[derive(Clone, Debug)]
pub struct GeneratedSample {
    pub record: SampleRecord,
    pub image: Raster,
    pub mask: BinaryMask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub class: Structure,
    pub style: CropStyle,
    pub count: usize,
    pub seed: u64,
    pub instances_per_sample: usize,
}

impl SynthConfig {
    pub fn new(class: Structure, style: CropStyle, count: usize, seed: u64) -> Self {
        Self { class, style, count, seed, instances_per_sample: 1 }
    }
}

/// Generates `count` samples. Sample `i` uses background `i mod |backgrounds|`
/// and draws its donors uniformly from `donors` with a random stream derived
/// from `(seed, i)`, so the output is identical for any `jobs` value.
pub fn generate_dataset(
    backgrounds: &[SourceTile],
    donors: &[SourceTile],
    config: &SynthConfig,
    jobs: usize,
) -> Result<(Vec<GeneratedSample>, SynthManifest), SynthError> {
    config.style.validate()?;
    if config.instances_per_sample == 0 {
        return Err(SynthError::NoInstances);
    }
    let manifest_of = |samples: Vec<SampleRecord>| SynthManifest {
        class: config.class,
        style: config.style,
        count: config.count,
        seed: config.seed,
        instances_per_sample: config.instances_per_sample,
        samples,
    };
    if config.count == 0 {
        return Ok((Vec::new(), manifest_of(Vec::new())));
    }
    if backgrounds.is_empty() {
        return Err(SynthError::NoBackgrounds);
    }
    if donors.is_empty() {
        return Err(SynthError::NoDonors);
    }
    if let Some(bg) = backgrounds.iter().find(|b| !b.mask.is_clear()) {
        log::debug!("background tile {} carries labels", bg.id);
        return Err(SynthError::BackgroundNotEmpty);
    }
    if donors.iter().any(|d| d.mask.is_clear()) {
        return Err(SynthError::EmptyMask);
    }

    let make = |index: usize| -> Result<GeneratedSample, SynthError> {
        let mut rng = item_rng(config.seed, index as u64);
        let bg = &backgrounds[index % backgrounds.len()];
        let mut image = bg.image.clone();
        let mut mask = bg.mask.clone();
        let mut placements = Vec::with_capacity(config.instances_per_sample);
        for _ in 0..config.instances_per_sample {
            let donor = &donors[rng.random_range(0..donors.len())];
            let patch = extract_instance(&donor.image, &donor.mask, config.style, donor.id, &mut rng)?;
            let pasted = paste_over(&image, &mask, &patch, &mut rng)?;
            placements.push(Placement {
                donor_id: donor.id,
                source_x: patch.source_origin.0,
                source_y: patch.source_origin.1,
                width: patch.width(),
                height: patch.height(),
                x: pasted.position.0,
                y: pasted.position.1,
                footprint_pixels: patch.footprint.count_true(),
            });
            image = pasted.image;
            mask = pasted.mask;
        }
        Ok(GeneratedSample { record: SampleRecord { index, background_id: bg.id, placements }, image, mask })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let samples: Vec<GeneratedSample> =
        pool.install(|| (0..config.count).into_par_iter().map(make).collect::<Result<_, _>>())?;
    let manifest = manifest_of(samples.iter().map(|s| s.record.clone()).collect());
    Ok((samples, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stage_rng;

    fn gradient(w: usize, h: usize) -> Raster {
        Raster::from_u8(w, h, 1, (0..w * h).map(|i| (i % 251) as u8).collect()).unwrap()
    }

    #[test]
    fn rectangular_square_component() {
        let mask = BinaryMask::from_fn(8, 8, |x, y| (2..5).contains(&x) && (3..6).contains(&y)).unwrap();
        let p = extract_instance(&gradient(8, 8), &mask, CropStyle::RectangularCropped, 1, &mut stage_rng(0)).unwrap();
        assert_eq!((p.width(), p.height()), (3, 3));
        assert_eq!(p.footprint.count_true(), 9);
        assert_eq!(p.source_origin, (2, 3));
    }

    #[test]
    fn pixel_precise_l_shape() {
        let mask = BinaryMask::from_ascii(&["......", ".#....", ".#....", ".###..", "......"]).unwrap();
        let p = extract_instance(&gradient(6, 5), &mask, CropStyle::PixelPreciseCropped, 1, &mut stage_rng(0)).unwrap();
        assert_eq!(p.footprint, BinaryMask::from_ascii(&["#..", "#..", "###"]).unwrap());
        assert_eq!(p.extent, p.footprint);
        // pixels outside the footprint are blanked
        assert_eq!(p.pixels.get(1, 0, 0), 0.0);
        assert_eq!(p.pixels.get(0, 0, 0), 7.0);
    }

    #[test]
    fn padded_single_pixel() {
        let mask = BinaryMask::from_fn(9, 9, |x, y| x == 4 && y == 4).unwrap();
        let p = extract_instance(&gradient(9, 9), &mask, CropStyle::Padded(2), 1, &mut stage_rng(0)).unwrap();
        assert_eq!((p.width(), p.height()), (5, 5));
        assert_eq!(p.footprint.count_true(), 1);
        assert!(p.footprint.get(2, 2));
        assert_eq!(p.extent.count_true(), 25);
    }

    #[test]
    fn padded_extent_is_clipped_at_donor_border() {
        let mask = BinaryMask::from_fn(9, 9, |x, y| x == 0 && y == 1).unwrap();
        let p = extract_instance(&gradient(9, 9), &mask, CropStyle::Padded(2), 1, &mut stage_rng(0)).unwrap();
        assert_eq!((p.width(), p.height()), (3, 4));
        assert_eq!(p.source_origin, (0, 0));
    }

    #[test]
    fn invalid_inputs() {
        let empty = BinaryMask::new(4, 4).unwrap();
        let img = gradient(4, 4);
        assert_eq!(
            extract_instance(&img, &empty, CropStyle::RectangularCropped, 0, &mut stage_rng(0)),
            Err(SynthError::EmptyMask)
        );
        assert_eq!(CropStyle::Padded(0).validate(), Err(SynthError::InvalidPadding(0)));
        assert_eq!(CropStyle::Padded(65).validate(), Err(SynthError::InvalidPadding(65)));
        assert_eq!("padded:3".parse::<CropStyle>(), Ok(CropStyle::Padded(3)));
        assert!("padded:0".parse::<CropStyle>().is_err());
    }

    #[test]
    fn pixel_precise_paste_preserves_background() {
        let donor_mask = BinaryMask::from_ascii(&["......", ".#....", ".##...", "......"]).unwrap();
        let donor = Raster::from_u8(6, 4, 1, vec![200; 24]).unwrap();
        let patch =
            extract_instance(&donor, &donor_mask, CropStyle::PixelPreciseCropped, 9, &mut stage_rng(1)).unwrap();
        let bg = gradient(10, 10);
        let out = paste(&bg, &BinaryMask::new(10, 10).unwrap(), &patch, &mut stage_rng(2)).unwrap();
        assert_eq!(out.mask.count_true(), patch.footprint.count_true());
        for y in 0..10 {
            for x in 0..10 {
                if out.mask.get(x, y) {
                    assert_eq!(out.image.get(x, y, 0), 200.0);
                } else {
                    assert_eq!(out.image.get(x, y, 0), bg.get(x, y, 0));
                }
            }
        }
    }

    #[test]
    fn paste_rejects_oversized_and_labeled_backgrounds() {
        let mask = BinaryMask::filled(5, 5, true).unwrap();
        let patch = extract_instance(&gradient(5, 5), &mask, CropStyle::RectangularCropped, 0, &mut stage_rng(0)).unwrap();
        let small = gradient(4, 4);
        assert!(matches!(
            paste(&small, &BinaryMask::new(4, 4).unwrap(), &patch, &mut stage_rng(0)),
            Err(SynthError::PatchTooLarge { .. })
        ));
        let labeled = BinaryMask::filled(6, 6, true).unwrap();
        assert_eq!(paste(&gradient(6, 6), &labeled, &patch, &mut stage_rng(0)), Err(SynthError::BackgroundNotEmpty));
    }

    fn tiles() -> (Vec<SourceTile>, Vec<SourceTile>) {
        let bgs = (0..2)
            .map(|id| SourceTile { id, image: gradient(16, 16), mask: BinaryMask::new(16, 16).unwrap() })
            .collect();
        let donors = (10..13)
            .map(|id| SourceTile {
                id,
                image: Raster::from_u8(16, 16, 1, vec![id as u8; 256]).unwrap(),
                mask: BinaryMask::from_fn(16, 16, |x, y| {
                    (x < 3 && y < 2) || ((8..8 + id as usize - 8).contains(&x) && (9..12).contains(&y))
                })
                .unwrap(),
            })
            .collect();
        (bgs, donors)
    }

    #[test]
    fn backgrounds_cycle_in_order() {
        let (bgs, donors) = tiles();
        let cfg = SynthConfig::new(Structure::Aguada, CropStyle::RectangularCropped, 5, 4);
        let (samples, manifest) = generate_dataset(&bgs, &donors, &cfg, 1).unwrap();
        let order: Vec<u64> = manifest.samples.iter().map(|s| s.background_id).collect();
        assert_eq!(order, vec![0, 1, 0, 1, 0]);
        assert!(samples.iter().all(|s| !s.mask.is_clear()));

        let zero = SynthConfig { count: 0, ..cfg };
        assert!(generate_dataset(&bgs, &donors, &zero, 1).unwrap().0.is_empty());
        assert_eq!(generate_dataset(&[], &donors, &cfg, 1).unwrap_err(), SynthError::NoBackgrounds);
        assert_eq!(generate_dataset(&bgs, &[], &cfg, 1).unwrap_err(), SynthError::NoDonors);
    }

    #[test]
    fn same_output_for_any_worker_count() {
        let (bgs, donors) = tiles();
        let cfg = SynthConfig::new(Structure::Building, CropStyle::Padded(1), 12, 99);
        let (a, ma) = generate_dataset(&bgs, &donors, &cfg, 1).unwrap();
        let (b, mb) = generate_dataset(&bgs, &donors, &cfg, 4).unwrap();
        assert_eq!(ma, mb);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.mask, y.mask);
        }
    }
}
