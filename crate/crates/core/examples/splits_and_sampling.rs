//! Class distribution, weighted tile sampling, oversampling, stratified
//! folds, crop positions and pseudo-label merging.

use std::collections::BTreeMap;

use mayakit::dataset::{
    crop_position_sampler, measure_distribution, oversample, pseudo_label_merge, stratified_kfold, weighted_sample,
    LabeledTile, SampleClass, SamplerWeights, Stratification, DEFAULT_FRACTION_THRESHOLDS,
};
use mayakit::fixtures::{generate_fixtures, FixtureConfig};
use mayakit::postprocess::ProbabilityThreshold;
use mayakit::raster::Geometry;
use mayakit::rng::stage_rng;
use mayakit::{ProbMap, Structure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = FixtureConfig { geometry: Geometry { sentinel_side: 12, als_side: 96 }, ..FixtureConfig::new(24, 2) };
    let tiles: Vec<LabeledTile> = generate_fixtures(&config)?
        .into_iter()
        .map(|t| {
            let mut l = LabeledTile::new(t.id(), 96, 96);
            for (c, m) in t.masks {
                l.set_mask(c, m).unwrap();
            }
            l
        })
        .collect();

    let dist = measure_distribution(&tiles);
    for class in SampleClass::ALL {
        let s = dist.share(class);
        println!("{class:?}: {} tiles, {:.4} of pixels", s.tile_count, s.pixel_fraction);
    }

    let draws = weighted_sample(&tiles, &SamplerWeights::custom(1.0, 2.0, 1.0, 1.0)?, 1000, 7)?;
    let aguada = draws.iter().filter(|d| d.class == SampleClass::Aguada).count();
    println!("weighted draws: {aguada}/1000 aguada");
    println!("oversampled x3: {} -> {}", tiles.len(), oversample(&tiles, Structure::Aguada, 3)?.len());

    let strategy = Stratification::FractionBins { class: Structure::Platform, thresholds: DEFAULT_FRACTION_THRESHOLDS.to_vec() };
    let folds = stratified_kfold(&tiles, 4, &strategy, 1)?;
    println!("fold sizes {:?}, fold 0 = {:?}", folds.fold_sizes(), folds.members(0));

    let with_building = tiles.iter().find(|t| t.contains(Structure::Building)).unwrap();
    let mask = with_building.mask(Structure::Building).unwrap();
    let (x, y) = crop_position_sampler(mask, 48, 0.005, &mut stage_rng(4))?;
    println!("48px crop of tile {} at ({x}, {y})", with_building.id);

    // Confident predictions on an unlabeled tile become training labels.
    let unlabeled = 900;
    let mut maps = BTreeMap::new();
    for c in Structure::ALL {
        let v = (0..96 * 96).map(|i| if c == Structure::Aguada && i % 96 < 10 { 0.9 } else { 0.1 }).collect();
        maps.insert((unlabeled, c), ProbMap::new(96, 96, v)?);
    }
    let merged = pseudo_label_merge(&tiles, &[unlabeled], &maps, ProbabilityThreshold::from_fraction(0.5))?;
    let pseudo = merged.last().unwrap();
    println!("pseudo-labeled tile {}: {} aguada pixels", pseudo.id, pseudo.mask(Structure::Aguada).unwrap().count_true());
    Ok(())
}
