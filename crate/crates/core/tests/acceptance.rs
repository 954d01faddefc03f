//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mayakit::augment::DihedralElement;
use mayakit::dataset::{oversample, stratified_kfold, weighted_sample, LabeledTile, SampleClass, SamplerWeights, Stratification};
use mayakit::ensemble::{tta_predict, Constant, EnsembleError, Predictor};
use mayakit::evaluate::{leaderboard, tile_iou, tile_metrics, LeaderboardEntry, SegMetrics};
use mayakit::fixtures::{generate_fixtures, FixtureConfig};
use mayakit::postprocess::{binarize, blob_filter, fill_holes, quantize, ProbabilityThreshold};
use mayakit::preprocess::{
    build_s1_tile, db_to_unit, sigma0_to_unit, temporal_stats, Acquisition, InputScale, Orbit, Period, Polarization,
    S1Layout, Statistic,
};
use mayakit::raster::{read_tiff_file, write_tiff_file, ModalityKind};
use mayakit::synthgen::{generate_dataset, CropStyle, GeneratedSample, SourceTile, SynthConfig};
use mayakit::{BinaryMask, ProbMap, Raster, Samples, Structure, TileRecord};

/// Overall IoU of the end-to-end fixture run with seed 7, pinned when the
/// pipeline first went green.
const PINNED_END_TO_END_IOU: f64 = 0.6714395336052674;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_mask(r: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| r.random_bool(density)).unwrap()
}

// 1 -------------------------------------------------------------------------

const TABLE_1: [(&str, f64, f64, f64, f64, usize); 8] = [
    ("Aksell", 0.8341, 0.9844, 0.7651, 0.753, 1),
    ("ArchAI", 0.8316, 0.9873, 0.7611, 0.7464, 2),
    ("German Computer Archaeologists", 0.8275, 0.9851, 0.7404, 0.7569, 3),
    ("dmitrykonov", 0.8262, 0.9836, 0.7542, 0.7409, 4),
    ("The Sentinels", 0.8183, 0.9854, 0.73, 0.7394, 5),
    ("taka", 0.8127, 0.9771, 0.7354, 0.7256, 6),
    ("cayala", 0.811, 0.9863, 0.7082, 0.7386, 7),
    ("sankovalev", 0.811, 0.9844, 0.7421, 0.7066, 7),
];

fn leaderboard_arithmetic() -> Outcome {
    let start = Instant::now();
    // Fed in reverse so the ordering has to come from the scores.
    let entries: Vec<LeaderboardEntry> =
        TABLE_1.iter().rev().map(|&(n, _, a, p, b, _)| LeaderboardEntry::new(n, a, p, b)).collect();
    let rows = leaderboard(&entries);
    let got: Vec<(&str, usize)> = rows.iter().map(|r| (r.name.as_str(), r.rank)).collect();
    // Tied rows keep input order, which was reversed.
    let mut want: Vec<(&str, usize)> = TABLE_1.iter().map(|t| (t.0, t.5)).collect();
    want.swap(6, 7);
    check(got == want, || format!("ordering {got:?}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;

    let mut worst: f64 = 0.0;
    let mut off = Vec::new();
    for &(name, overall, a, p, b, _) in &TABLE_1 {
        let mean = (a + p + b) / 3.0;
        let err = (mean - overall).abs();
        worst = worst.max(err);
        if err > 5e-5 {
            let shown = rows.iter().find(|r| r.name == name).unwrap().avg_iou;
            off.push(format!("{name}: mean {mean:.6} (shown {shown:.4}) vs printed {overall}, |d| = {err:.1e}"));
        }
    }
    if off.is_empty() {
        Ok(format!("8 rows, max |mean - printed| = {worst:.1e}, ordering and shared rank 7 hold"))
    } else {
        Err(format!("ordering and shared rank 7 hold; {} row(s) beyond 5e-5: {}", off.len(), off.join("; ")))
    }
}

// 2 -------------------------------------------------------------------------

const TABLE_4_1: [(&str, f64, f64, f64); 8] = [
    ("building/train", 0.7330, 0.9948, 0.8639),
    ("building/valid", 0.7215, 0.9946, 0.8581),
    ("platform/train", 0.7367, 0.9899, 0.8633),
    ("platform/valid", 0.6350, 0.9899, 0.8125),
    ("aguada/train", 0.3815, 0.9969, 0.6892),
    ("aguada/valid", 0.4034, 0.9979, 0.7006),
    ("average/train", 0.6171, 0.9939, 0.8055),
    ("average/valid", 0.5866, 0.9941, 0.7904),
];

fn printed_metrics(iou_pos: f64, iou_neg: f64) -> SegMetrics {
    SegMetrics { iou_pos, iou_neg, miou: f64::NAN, tpr: 0.0, fpr: 0.0, tnr: 0.0, fnr: 0.0, ppv: 0.0 }
}

fn table_consistency() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for &(row, pos, neg, miou) in &TABLE_4_1 {
        let m = SegMetrics::mean(&[printed_metrics(pos, neg)]).unwrap();
        let err = (m.miou - miou).abs();
        worst = worst.max(err);
        check(err <= 5e-5 + 1e-12, || format!("{row}: ({pos}+{neg})/2 = {} vs {miou}", m.miou))?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("8 rows, max |(IoU+ + IoU-)/2 - mIoU| = {worst:.1e}"))
}

// 3 -------------------------------------------------------------------------

fn counts_oracle(pred: &BinaryMask, gt: &BinaryMask) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            match (pred.get(x, y), gt.get(x, y)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
    }
    (tp, fp, tn, fn_)
}

fn frac(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn iou_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(3);
    let mut both_empty = 0;
    let mut disjoint = 0;
    for i in 0..1000 {
        let (w, h) = (r.random_range(1..=64), r.random_range(1..=64));
        let (pred, gt) = match i % 10 {
            0 => (BinaryMask::new(w, h).unwrap(), BinaryMask::new(w, h).unwrap()),
            1 => {
                let p = random_mask(&mut r, w, h, 0.3);
                let g = BinaryMask::from_fn(w, h, |x, y| !p.get(x, y) && (x + y) % 2 == 0).unwrap();
                (p, g)
            }
            _ => {
                let (d1, d2) = (r.random_range(0.0..1.0), r.random_range(0.0..1.0));
                (random_mask(&mut r, w, h, d1), random_mask(&mut r, w, h, d2))
            }
        };
        let (tp, fp, tn, fn_) = counts_oracle(&pred, &gt);
        let iou = tile_iou(&pred, &gt).unwrap();
        let want = frac(tp, tp + fp + fn_);
        check(iou == want, || format!("pair {i}: tile_iou {iou} vs oracle {want}"))?;
        if tp + fp + fn_ == 0 {
            both_empty += 1;
            check(iou == 1.0, || format!("pair {i}: both empty gave {iou}"))?;
        } else if tp == 0 {
            disjoint += 1;
            check(iou == 0.0, || format!("pair {i}: disjoint gave {iou}"))?;
        }
        let m = tile_metrics(&pred, &gt).unwrap();
        let neg = frac(tn, tn + fp + fn_);
        let expect = [want, neg, (want + neg) / 2.0, frac(tp, tp + fn_), frac(fp, fp + tn), frac(tn, tn + fp), frac(fn_, tp + fn_), frac(tp, tp + fp)];
        let got = [m.iou_pos, m.iou_neg, m.miou, m.tpr, m.fpr, m.tnr, m.fnr, m.ppv];
        check(got == expect, || format!("pair {i}: metrics {got:?} vs {expect:?}"))?;
    }
    check(both_empty >= 100 && disjoint >= 100, || format!("edge cases {both_empty}/{disjoint}"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("1000 pairs exact ({both_empty} both-empty, {disjoint} disjoint)"))
}

// 4 -------------------------------------------------------------------------

fn threshold_semantics() -> Outcome {
    let t50 = ProbabilityThreshold::from_fraction(0.5);
    check(t50.level() == 128, || format!("t=0.5 gives level {}", t50.level()))?;
    let cut50 = t50.min_admitted_fraction();
    check((cut50 - 0.502).abs() < 0.001 && (t50.max_rejected_fraction().unwrap() - 0.498).abs() < 0.001, || {
        format!("t=0.5 cut {cut50}")
    })?;
    let t55 = ProbabilityThreshold::from_level(55);
    let cut55 = t55.min_admitted_fraction() * 100.0;
    check((cut55 - 21.57).abs() <= 0.01, || format!("T=55 cut {cut55}%"))?;

    // Every quantized level, represented by its exact value and by values
    // just inside its rounding interval.
    let values: Vec<f32> = (0..=255u32)
        .flat_map(|q| {
            let c = q as f32 / 255.0;
            [c, (c - 0.49 / 255.0).max(0.0), (c + 0.49 / 255.0).min(1.0)]
        })
        .collect();
    for &v in &values {
        check(u32::from(quantize(v)) == (f64::from(v) * 255.0).round() as u32, || format!("quantize({v})"))?;
    }
    let map = ProbMap::new(values.len(), 1, values.clone()).unwrap();
    for level in 0..=255u8 {
        let t = ProbabilityThreshold::from_level(level);
        let mask = binarize(&map, t);
        for (i, &v) in values.iter().enumerate() {
            let want = quantize(v) >= level;
            check(mask.get(i, 0) == want, || format!("T={level}, p={v}: got {}", mask.get(i, 0)))?;
        }
    }
    Ok(format!("T(0.5)=128 (cut {:.2}%), T=55 cut {cut55:.2}%, 256 levels exhaustive", cut50 * 100.0))
}

// 5 -------------------------------------------------------------------------

fn components_oracle(mask: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (x, y) in mask.true_pixels() {
        if !seen.insert((x, y)) {
            continue;
        }
        let mut comp = vec![(x, y)];
        let mut stack = vec![(x, y)];
        while let Some((cx, cy)) = stack.pop() {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let p = (nx as usize, ny as usize);
                    if mask.get(p.0, p.1) && seen.insert(p) {
                        comp.push(p);
                        stack.push(p);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// False pixels 4-reachable from the border through false pixels.
fn outside_oracle(mask: &BinaryMask) -> BTreeSet<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && !mask.get(x, y) && seen.insert((x, y)) {
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let cand = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
        for (nx, ny) in cand {
            if nx < w && ny < h && !mask.get(nx, ny) && seen.insert((nx, ny)) {
                queue.push_back((nx, ny));
            }
        }
    }
    seen
}

fn morphology() -> Outcome {
    let start = Instant::now();
    let mut r = rng(5);
    for i in 0..1000 {
        let density = r.random_range(0.1..0.7);
        let mask = random_mask(&mut r, 48, 48, density);
        let (min_area, min_boundary) = (r.random_range(0..40), r.random_range(0..40));

        let mut want = BinaryMask::new(48, 48).unwrap();
        for comp in components_oracle(&mask) {
            let border = comp.iter().any(|&(x, y)| x == 0 || y == 0 || x == 47 || y == 47);
            if comp.len() >= if border { min_boundary } else { min_area } {
                for (x, y) in comp {
                    want.set(x, y, true);
                }
            }
        }
        let filtered = blob_filter(&mask, min_area, min_boundary);
        check(filtered == want, || format!("mask {i}: blob_filter differs from oracle"))?;
        check(blob_filter(&filtered, min_area, min_boundary) == filtered, || format!("mask {i}: blob_filter not idempotent"))?;

        let outside = outside_oracle(&mask);
        let want = BinaryMask::from_fn(48, 48, |x, y| !outside.contains(&(x, y))).unwrap();
        let filled = fill_holes(&mask);
        check(filled == want, || format!("mask {i}: fill_holes differs from oracle"))?;
        check(fill_holes(&filled) == filled, || format!("mask {i}: fill_holes not idempotent"))?;
        check(mask.is_subset_of(&filled), || format!("mask {i}: fill_holes removed pixels"))?;
        let reach = outside_oracle(&filled);
        let holes = (0..48 * 48).filter(|&k| !filled.get(k % 48, k / 48) && !reach.contains(&(k % 48, k / 48))).count();
        check(holes == 0, || format!("mask {i}: {holes} false pixels unreachable from the border"))?;
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("1000 masks 48x48, oracles and idempotence hold ({:.2?})", start.elapsed()))
}

// 6 -------------------------------------------------------------------------

fn random_square(r: &mut ChaCha8Rng, side: usize, bands: usize, float: bool) -> Raster {
    let n = side * side * bands;
    if float {
        Raster::from_f32(side, side, bands, (0..n).map(|_| r.random::<f32>() * 1e3 - 500.0).collect()).unwrap()
    } else {
        Raster::from_u8(side, side, bands, (0..n).map(|_| r.random()).collect()).unwrap()
    }
}

/// Pointwise in the ALS rasters, hence commutes with every dihedral transform.
struct Pointwise;

impl Predictor for Pointwise {
    fn name(&self) -> &str {
        "pointwise"
    }

    fn predict(&self, tile: &TileRecord, _class: Structure) -> Result<ProbMap, EnsembleError> {
        let als = tile.get(ModalityKind::Als).unwrap();
        let (a, b) = (als.band_values(0), als.band_values(2));
        let v = a.iter().zip(&b).map(|(a, b)| ((a * 0.7 + b * 0.3) / 255.0).sqrt() as f32).collect();
        Ok(ProbMap::new(als.width(), als.height(), v).unwrap())
    }
}

fn dihedral() -> Outcome {
    let mut r = rng(6);
    let all: BTreeSet<(bool, u8)> = DihedralElement::ALL.iter().map(|e| (e.flip, e.quarter_turns)).collect();
    check(all.len() == 8, || "ALL does not list 8 distinct elements".into())?;
    let probe = random_square(&mut r, 9, 2, false);
    for a in DihedralElement::ALL {
        for b in DihedralElement::ALL {
            let ab = a.then(b);
            check(all.contains(&(ab.flip, ab.quarter_turns)), || format!("{} then {} not closed", a.name(), b.name()))?;
            let seq = b.apply_raster(&a.apply_raster(&probe).unwrap()).unwrap();
            check(seq == ab.apply_raster(&probe).unwrap(), || format!("{} then {} mismatch", a.name(), b.name()))?;
        }
    }
    for trial in 0..40 {
        let side = r.random_range(1..=33);
        let bands = r.random_range(1..=4);
        let raster = random_square(&mut r, side, bands, trial % 2 == 0);
        for e in DihedralElement::ALL {
            let back = e.inverse().apply_raster(&e.apply_raster(&raster).unwrap()).unwrap();
            let same = match (raster.samples(), back.samples()) {
                (Samples::U8(a), Samples::U8(b)) => a == b,
                (Samples::F32(a), Samples::F32(b)) => a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
                _ => false,
            };
            check(same, || format!("{} inverse not identity on {side}x{side}x{bands}", e.name()))?;
        }
    }

    let mut tile = TileRecord::new(1);
    tile.insert(ModalityKind::Als, random_square(&mut r, 48, 3, false)).unwrap();
    for v in [0.0f32, 0.1, 1.0 / 3.0, 0.5, 0.7, 0.999_999, 1.0] {
        let out = tta_predict(&Constant::new(v).unwrap(), &tile, Structure::Building).unwrap();
        check(out.values().iter().all(|&x| x == v), || format!("TTA(Constant({v})) drifted"))?;
    }
    let plain = Pointwise.predict(&tile, Structure::Platform).unwrap();
    let tta = tta_predict(&Pointwise, &tile, Structure::Platform).unwrap();
    let dev = plain.values().iter().zip(tta.values()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    check(dev <= 1e-7, || format!("equivariant TTA deviates by {dev}"))?;
    Ok(format!("64 compositions closed, inverses bit-exact, constant exact, equivariant dev {dev:.1e}"))
}

// 7 -------------------------------------------------------------------------

fn linear_percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn stats_oracle(xs: &[f64]) -> [f64; 6] {
    let n = xs.len() as f64;
    let mut mean = 0.0;
    for x in xs {
        mean += x;
    }
    mean /= n;
    let mut ss = 0.0;
    for x in xs {
        ss += (x - mean) * (x - mean);
    }
    let std = (ss / n).sqrt();
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if s.len() % 2 == 1 { s[s.len() / 2] } else { (s[s.len() / 2 - 1] + s[s.len() / 2]) / 2.0 };
    let cv = if mean == 0.0 { 0.0 } else { std / mean };
    [mean, median, std, cv, linear_percentile(&s, 0.05), linear_percentile(&s, 0.95)]
}

fn statistics() -> Outcome {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let len = r.random_range(1..=32);
        let xs: Vec<f64> = (0..len).map(|_| r.random_range(0.0..1.0)).collect();
        let got = temporal_stats(&xs).unwrap().to_array();
        let want = stats_oracle(&xs);
        for k in 0..6 {
            let err = (got[k] - want[k]).abs();
            worst = worst.max(err);
            check(err <= 1e-9, || format!("series {i} stat {k}: {} vs {}", got[k], want[k]))?;
        }
    }
    for (db, unit) in [(-30.0, 0.0), (5.0, 1.0), (-12.5, 0.5)] {
        check(db_to_unit(db) == unit, || format!("db_to_unit({db}) = {}", db_to_unit(db)))?;
        let linear = 10f64.powf(db / 10.0);
        let got = sigma0_to_unit(linear);
        check(got == unit, || format!("sigma0_to_unit({linear}) = {got}"))?;
    }

    // Each acquisition is constant, so every band of the built tile is the
    // statistic of a known series.
    for trial in 0..5 {
        let mut acquisitions = Vec::new();
        for year in 2017..=2020u16 {
            for orbit in Orbit::ALL {
                for pol in Polarization::ALL {
                    for _ in 0..r.random_range(1..=4) {
                        let v = r.random_range(0.0f32..1.0);
                        let raster = Raster::from_f32(3, 3, 1, vec![v; 9]).unwrap();
                        acquisitions.push(Acquisition { polarization: pol, orbit, year, raster });
                    }
                }
            }
        }
        let tile = build_s1_tile(&acquisitions, InputScale::Unit).unwrap();
        check(tile.bands() == S1Layout::BANDS && S1Layout::BANDS == 120, || format!("tile has {} bands", tile.bands()))?;
        for band in 0..120 {
            let (period, orbit, pol, stat) = S1Layout::band_meaning(band).unwrap();
            check(S1Layout::band_index(period, orbit, pol, stat) == band, || format!("layout roundtrip at {band}"))?;
            let series: Vec<f64> = acquisitions
                .iter()
                .filter(|a| a.orbit == orbit && a.polarization == pol && period.contains(a.year))
                .map(|a| a.raster.get(0, 0, 0))
                .collect();
            let want = stats_oracle(&series)[Statistic::ALL.iter().position(|&s| s == stat).unwrap()];
            let got = tile.get(1, 2, band);
            check((got - want).abs() <= 1e-6, || format!("trial {trial} band {band}: {got} vs {want}"))?;
        }
    }
    check(S1Layout::band_index(Period::Y2017, Orbit::Ascending, Polarization::Vv, Statistic::Mean) == 0, || "first band".into())?;
    Ok(format!("10000 series, max err {worst:.1e}; dB anchors exact; 120-band layout verified"))
}

// 8 -------------------------------------------------------------------------

fn component_containing(mask: &BinaryMask, seed: (usize, usize)) -> BTreeSet<(usize, usize)> {
    components_oracle(mask).into_iter().find(|c| c.contains(&seed)).unwrap().into_iter().collect()
}

fn verify_sample(s: &GeneratedSample, style: CropStyle, bgs: &[SourceTile], donors: &[SourceTile]) -> Result<(), String> {
    let bg = bgs.iter().find(|b| b.id == s.record.background_id).unwrap();
    let p = &s.record.placements[0];
    let donor = donors.iter().find(|d| d.id == p.donor_id).unwrap();
    let (w, h) = (s.mask.width(), s.mask.height());
    let inside = |x: usize, y: usize| x >= p.x && y >= p.y && x < p.x + p.width && y < p.y + p.height;
    let to_donor = |x: usize, y: usize| (x - p.x + p.source_x, y - p.y + p.source_y);

    let pad = match style {
        CropStyle::Padded(n) => n as usize,
        _ => 0,
    };
    let (dw, dh) = (donor.mask.width(), donor.mask.height());
    let placed = (p.source_x, p.source_y, p.source_x + p.width - 1, p.source_y + p.height - 1);
    let window_of = |c: &[(usize, usize)]| {
        let (x0, x1) = (c.iter().map(|c| c.0).min().unwrap(), c.iter().map(|c| c.0).max().unwrap());
        let (y0, y1) = (c.iter().map(|c| c.1).min().unwrap(), c.iter().map(|c| c.1).max().unwrap());
        (x0.saturating_sub(pad), y0.saturating_sub(pad), (x1 + pad).min(dw - 1), (y1 + pad).min(dh - 1))
    };
    let comp: BTreeSet<(usize, usize)> = match style {
        CropStyle::RectangularCropped => components_oracle(&donor.mask)
            .into_iter()
            .find(|c| window_of(c) == placed)
            .ok_or_else(|| format!("sample {}: no donor component spans {placed:?}", s.record.index))?
            .into_iter()
            .collect(),
        _ => {
            let (x, y) = s.mask.true_pixels().next().ok_or_else(|| format!("sample {}: empty mask", s.record.index))?;
            if !inside(x, y) {
                return Err(format!("sample {}: label outside the placement", s.record.index));
            }
            let d = to_donor(x, y);
            if !donor.mask.get(d.0, d.1) {
                return Err(format!("sample {}: label not on a donor pixel", s.record.index));
            }
            component_containing(&donor.mask, d)
        }
    };
    let window = window_of(&comp.iter().copied().collect::<Vec<_>>());
    check(window == placed, || format!("sample {}: window {window:?} vs placement {p:?}", s.record.index))?;

    let chebyshev = |(x, y): (usize, usize)| comp.iter().any(|&(cx, cy)| cx.abs_diff(x) <= pad && cy.abs_diff(y) <= pad);
    for y in 0..h {
        for x in 0..w {
            let (label, pasted) = if inside(x, y) {
                let d = to_donor(x, y);
                match style {
                    CropStyle::RectangularCropped => (true, true),
                    CropStyle::PixelPreciseCropped => (comp.contains(&d), comp.contains(&d)),
                    CropStyle::Padded(_) => (comp.contains(&d), chebyshev(d)),
                }
            } else {
                (false, false)
            };
            check(s.mask.get(x, y) == label, || format!("sample {}: mask wrong at ({x},{y})", s.record.index))?;
            for b in 0..s.image.bands() {
                let want = if pasted {
                    let (dx, dy) = to_donor(x, y);
                    donor.image.get(dx, dy, b)
                } else {
                    bg.image.get(x, y, b)
                };
                let got = s.image.get(x, y, b);
                check(got.to_bits() == want.to_bits(), || format!("sample {}: pixel ({x},{y},{b})", s.record.index))?;
            }
        }
    }
    check(s.mask.count_true() == p.footprint_pixels, || format!("sample {}: footprint count", s.record.index))
}

fn synthesis() -> Outcome {
    let fixtures = generate_fixtures(&FixtureConfig::new(32, 8)).map_err(|e| e.to_string())?;
    let class = Structure::Building;
    let source = |t: &mayakit::fixtures::FixtureTile| SourceTile {
        id: t.id(),
        image: t.record.get(ModalityKind::Als).unwrap().clone(),
        mask: t.masks[&class].clone(),
    };
    let bgs: Vec<SourceTile> = fixtures.iter().filter(|t| t.masks.values().all(BinaryMask::is_clear)).map(source).collect();
    let donors: Vec<SourceTile> = fixtures.iter().filter(|t| !t.masks[&class].is_clear()).map(source).collect();
    let styles = [(CropStyle::RectangularCropped, 67), (CropStyle::PixelPreciseCropped, 67), (CropStyle::Padded(4), 66)];
    let mut total = 0;
    for (k, &(style, count)) in styles.iter().enumerate() {
        let config = SynthConfig::new(class, style, count, 80 + k as u64);
        let (samples, manifest) = generate_dataset(&bgs, &donors, &config, 1).map_err(|e| e.to_string())?;
        let (_, manifest4) = generate_dataset(&bgs, &donors, &config, 4).map_err(|e| e.to_string())?;
        check(
            serde_json::to_string(&manifest).unwrap() == serde_json::to_string(&manifest4).unwrap(),
            || format!("{}: manifests differ between 1 and 4 jobs", style.name()),
        )?;
        for s in &samples {
            verify_sample(s, style, &bgs, &donors)?;
        }
        total += samples.len();
    }
    check(total == 200, || format!("{total} samples"))?;
    Ok(format!("200 samples over 3 styles ({} backgrounds, {} donors), manifests jobs-invariant", bgs.len(), donors.len()))
}

// 9 -------------------------------------------------------------------------

fn tile_with(id: u64, side: usize, classes: &[(Structure, usize)]) -> LabeledTile {
    let mut t = LabeledTile::new(id, side, side);
    for &(c, n) in classes {
        t.set_mask(c, BinaryMask::from_fn(side, side, |x, y| y * side + x < n).unwrap()).unwrap();
    }
    t
}

fn sampling() -> Outcome {
    let mut r = rng(9);
    for trial in 0..20 {
        let n = r.random_range(10..200);
        let tiles: Vec<LabeledTile> = (0..n)
            .map(|i| {
                let has = r.random_bool(0.3);
                tile_with(i as u64, 8, if has { &[(Structure::Building, 5)] } else { &[] })
            })
            .collect();
        let strategy = Stratification::Presence { class: Structure::Building };
        let folds = stratified_kfold(&tiles, 5, &strategy, trial).map_err(|e| e.to_string())?;
        check(folds.assignment.len() == n, || "not every tile assigned".into())?;
        for stratum in 0..2 {
            let mut per_fold = [0usize; 5];
            for t in tiles.iter().filter(|t| strategy.stratum(t) == stratum) {
                per_fold[folds.fold_of(t.id).unwrap()] += 1;
            }
            let spread = per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap();
            check(spread <= 1, || format!("trial {trial} stratum {stratum}: {per_fold:?}"))?;
        }
    }

    let bins = Stratification::FractionBins { class: Structure::Aguada, thresholds: vec![0.05, 0.15] };
    let got: Vec<usize> = [0, 1, 10, 20].iter().map(|&px| bins.stratum(&tile_with(0, 10, &[(Structure::Aguada, px)]))).collect();
    check(got == [0, 0, 1, 2], || format!("aguada bins {got:?}"))?;

    let pool: Vec<LabeledTile> = (0..12)
        .map(|i| match i % 4 {
            0 => tile_with(i, 8, &[]),
            1 => tile_with(i, 8, &[(Structure::Aguada, 3)]),
            2 => tile_with(i, 8, &[(Structure::Building, 3)]),
            _ => tile_with(i, 8, &[(Structure::Platform, 3), (Structure::Building, 1)]),
        })
        .collect();
    let draws = weighted_sample(&pool, &SamplerWeights::equal(), 100_000, 9).map_err(|e| e.to_string())?;
    let mut freq = BTreeMap::new();
    for d in &draws {
        *freq.entry(d.class).or_insert(0usize) += 1;
        check(pool[d.tile].has(d.class), || format!("draw {d:?} lacks its class"))?;
    }
    let shares: Vec<f64> = SampleClass::ALL.iter().map(|c| freq.get(c).copied().unwrap_or(0) as f64 / 1e5).collect();
    check(shares.iter().all(|s| (s - 0.25).abs() <= 0.02), || format!("shares {shares:?}"))?;

    let ten: Vec<LabeledTile> =
        (0..10).map(|i| tile_with(i, 8, if i == 2 || i == 7 { &[(Structure::Aguada, 4)] } else { &[] })).collect();
    let over = oversample(&ten, Structure::Aguada, 6).map_err(|e| e.to_string())?;
    check(over.len() == 20, || format!("oversampled length {}", over.len()))?;
    Ok(format!("folds balanced, bins {got:?}, equal shares {shares:.4?}, oversample 20"))
}

// 10 ------------------------------------------------------------------------

fn reference_decode(path: &std::path::Path) -> Result<(u32, u32, u16, tiff::decoder::DecodingResult), String> {
    let file = std::fs::File::open(path).map_err(|e| e.to_string())?;
    let mut dec = tiff::decoder::Decoder::new(std::io::BufReader::new(file))
        .map_err(|e| e.to_string())?
        .with_limits(tiff::decoder::Limits::unlimited());
    let (w, h) = dec.dimensions().map_err(|e| e.to_string())?;
    let samples = dec.colortype().map_err(|e| e.to_string())?.num_samples();
    Ok((w, h, samples, dec.read_image().map_err(|e| e.to_string())?))
}

fn raster_roundtrip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(10);
    let mut files = 0;
    for (side, bands) in [(24, 120), (24, 221), (480, 3), (480, 1)] {
        for float in [false, true] {
            let raster = random_square(&mut r, side, bands, float);
            let path = dir.path().join(format!("r_{side}_{bands}_{float}.tif"));
            write_tiff_file(&path, &raster).map_err(|e| e.to_string())?;
            let back = read_tiff_file(&path).map_err(|e| e.to_string())?;
            let (w, h, spp, decoded) = reference_decode(&path)?;
            check((w as usize, h as usize, spp as usize) == (side, side, bands), || format!("reference shape {w}x{h}x{spp}"))?;
            let exact = match (raster.samples(), back.samples(), &decoded) {
                (Samples::U8(a), Samples::U8(b), tiff::decoder::DecodingResult::U8(c)) => a == b && a == c,
                (Samples::F32(a), Samples::F32(b), tiff::decoder::DecodingResult::F32(c)) => {
                    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                    bits(a) == bits(b) && bits(a) == bits(c)
                }
                _ => false,
            };
            check(exact && back.width() == side && back.bands() == bands, || format!("{side}x{side}x{bands} float={float} mismatch"))?;
            files += 1;
        }
    }
    Ok(format!("{files} files bit-exact through both decoders"))
}

// 11 ------------------------------------------------------------------------

fn cli(args: &[&str]) -> Result<serde_json::Value, String> {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["mayakit"];
    full.extend_from_slice(args);
    let code = mayakit::cli::run(full, &mut out, &mut err);
    if code != 0 {
        return Err(format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err)));
    }
    serde_json::from_slice(&out).map_err(|e| e.to_string())
}

fn end_to_end_once(jobs: &str) -> Result<(f64, Duration), String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let (fx, pr, en, pp) = (p("fixtures"), p("predict"), p("ensemble"), p("masks"));
    cli(&["fixtures", "--tiles", "32", "--seed", "7", "--jobs", jobs, "--out", &fx])?;
    cli(&["predict", &fx, "--variants", "3", "--seed", "7", "--jobs", jobs, "--out", &pr])?;
    cli(&["ensemble", &pr, "--variants", "3", "--seed", "7", "--jobs", jobs, "--out", &en])?;
    cli(&["postprocess", &en, "--jobs", jobs, "--out", &pp])?;
    let score = cli(&["score", &pp, &fx, "--jobs", jobs])?;
    let overall = score["overall"].as_f64().ok_or("no overall score")?;
    Ok((overall, start.elapsed()))
}

fn end_to_end() -> Outcome {
    let (a, ta) = end_to_end_once("1")?;
    let (b, tb) = end_to_end_once("2")?;
    within(ta.max(tb), Duration::from_secs(60))?;
    check(a.to_bits() == b.to_bits(), || format!("runs differ: {a} vs {b}"))?;
    check((a - PINNED_END_TO_END_IOU).abs() <= 1e-12, || format!("overall {a} vs pinned {PINNED_END_TO_END_IOU}"))?;
    Ok(format!("overall IoU {a:.6} twice (jobs 1: {ta:.1?}, jobs 2: {tb:.1?})"))
}

/// Criteria that cannot pass on the published numbers. The Aksell row's
/// per-class IoUs average to 0.834167 while 0.8341 is printed; with inputs
/// already rounded to 4 decimals no rounding rule closes a 6.7e-5 gap.
const EXPECTED_FAILURES: [usize; 1] = [1];

fn main() {
    let criteria: [Criterion; 11] = [
        ("leaderboard arithmetic", leaderboard_arithmetic),
        ("segmentation table consistency", table_consistency),
        ("IoU oracle equivalence", iou_oracle),
        ("threshold semantics", threshold_semantics),
        ("morphology properties", morphology),
        ("dihedral group laws", dihedral),
        ("statistics oracle", statistics),
        ("synthesis contract", synthesis),
        ("sampling and splitting", sampling),
        ("raster roundtrip", raster_roundtrip),
        ("end-to-end desk run", end_to_end),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let (mut passed, mut expected, mut unexpected) = (0, 0, 0);
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let known = EXPECTED_FAILURES.contains(&(i + 1));
        match (f(), known) {
            (Ok(detail), false) => {
                passed += 1;
                println!("criterion {:>2} PASS {name}: {detail}", i + 1);
            }
            (Ok(detail), true) => {
                unexpected += 1;
                println!("criterion {:>2} PASS {name} (listed as an expected failure; update the list): {detail}", i + 1);
            }
            (Err(why), true) => {
                expected += 1;
                println!("criterion {:>2} FAIL {name} (expected): {why}", i + 1);
            }
            (Err(why), false) => {
                unexpected += 1;
                println!("criterion {:>2} FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("{passed} passed, {expected} expected failure(s), {unexpected} unexpected");
    if unexpected > 0 {
        std::process::exit(1);
    }
}
