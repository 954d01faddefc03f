//! Copy-paste synthesis: cut annotated instances out of donor tiles and
//! paste them into empty backgrounds in three crop styles.

use mayakit::fixtures::{generate_fixtures, FixtureConfig};
use mayakit::raster::Geometry;
use mayakit::synthgen::{generate_dataset, CropStyle, SourceTile, SynthConfig};
use mayakit::{BinaryMask, ModalityKind, Structure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = FixtureConfig { geometry: Geometry { sentinel_side: 12, als_side: 128 }, ..FixtureConfig::new(16, 5) };
    let tiles = generate_fixtures(&config)?;
    let class = Structure::Building;
    let source = |t: &mayakit::fixtures::FixtureTile| SourceTile {
        id: t.id(),
        image: t.record.get(ModalityKind::Als).unwrap().clone(),
        mask: t.masks[&class].clone(),
    };
    let backgrounds: Vec<_> = tiles.iter().filter(|t| t.masks.values().all(BinaryMask::is_clear)).map(source).collect();
    let donors: Vec<_> = tiles.iter().filter(|t| !t.masks[&class].is_clear()).map(source).collect();
    println!("{} backgrounds, {} donors", backgrounds.len(), donors.len());

    for style in ["rectangular", "pixel-precise", "padded:3"] {
        let style: CropStyle = style.parse()?;
        let mut synth = SynthConfig::new(class, style, 4, 21);
        synth.instances_per_sample = 2;
        let (samples, manifest) = generate_dataset(&backgrounds, &donors, &synth, 2)?;
        let labeled: usize = samples.iter().map(|s| s.mask.count_true()).sum();
        println!("{:>14}: {} samples, {labeled} labeled pixels", style.name(), samples.len());
        let p = &manifest.samples[0].placements[0];
        println!("{:>14}  sample 0 took a {}x{} patch from tile {} to ({}, {})", "", p.width, p.height, p.donor_id, p.x, p.y);
    }
    Ok(())
}
