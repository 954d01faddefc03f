//! Test-time augmentation and soft voting over predictors, including a
//! user-defined one.

use mayakit::ensemble::{hard_vote, soft_vote, tta_predict, EnsembleError, HeuristicBaseline, Predictor};
use mayakit::evaluate::tile_iou;
use mayakit::fixtures::{generate_fixtures, FixtureConfig};
use mayakit::postprocess::{binarize, ProbabilityThreshold};
use mayakit::{ModalityKind, ProbMap, Structure, TileRecord};

/// Marks pixels whose slope band is high.
struct SteepSlopes;

impl Predictor for SteepSlopes {
    fn name(&self) -> &str {
        "steep"
    }

    fn predict(&self, tile: &TileRecord, _class: Structure) -> Result<ProbMap, EnsembleError> {
        let als = tile.get(ModalityKind::Als).ok_or(EnsembleError::MissingModality { tile_id: tile.tile_id, kind: ModalityKind::Als })?;
        let v = als.band_values(2).into_iter().map(|s| if s > 60.0 { 0.8 } else { 0.1 }).collect();
        Ok(ProbMap::new(als.width(), als.height(), v).expect("probabilities"))
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tiles = generate_fixtures(&FixtureConfig::new(4, 9))?;
    let tile = tiles.iter().find(|t| t.masks[&Structure::Building].count_true() > 0).expect("a tile with buildings");
    let class = Structure::Building;
    let truth = &tile.masks[&class];
    let t = ProbabilityThreshold::from_fraction(0.5);

    let members: Vec<Box<dyn Predictor>> = vec![
        Box::new(HeuristicBaseline::jittered(1)),
        Box::new(HeuristicBaseline::jittered(2)),
        Box::new(HeuristicBaseline::jittered(3)),
        Box::new(SteepSlopes),
    ];
    let mut maps = Vec::new();
    for m in &members {
        let plain = m.predict(&tile.record, class)?;
        let tta = tta_predict(m.as_ref(), &tile.record, class)?;
        println!("{:>12}: IoU {:.4} plain, {:.4} with TTA", m.name(), tile_iou(&binarize(&plain, t), truth)?, tile_iou(&binarize(&tta, t), truth)?);
        maps.push(tta);
    }
    let soft = soft_vote(&maps)?;
    let hard = hard_vote(&maps.iter().map(|m| binarize(m, t)).collect::<Vec<_>>())?;
    println!("soft vote IoU {:.4}, hard vote IoU {:.4}", tile_iou(&binarize(&soft, t), truth)?, tile_iou(&hard, truth)?);
    Ok(())
}
