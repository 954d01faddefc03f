//! Sentinel preprocessing: 120-band radar statistics from dated
//! acquisitions, a cloud-free optical composite, and mask encoding.

use mayakit::fixtures::{generate_tile, FixtureConfig};
use mayakit::preprocess::{
    build_s1_tile, db_to_unit, mask_decode, mask_encode, robust_minmax, s2_median_composite, InputScale, Orbit,
    Period, Polarization, S1Layout, S2Band, S2Stack, Statistic, DEFAULT_UPPER_QUANTILE,
};
use mayakit::raster::MaskMode;
use mayakit::{ModalityKind, Structure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tile = generate_tile(&FixtureConfig { raw_s1: true, ..FixtureConfig::new(1, 3) }, 1)?;

    for db in [-35.0, -30.0, -12.5, 0.0, 5.0] {
        println!("{db:>6} dB -> {:.3}", db_to_unit(db));
    }

    let s1 = build_s1_tile(&tile.s1_acquisitions, InputScale::LinearSigma0)?;
    println!("{} acquisitions -> {} bands", tile.s1_acquisitions.len(), s1.bands());
    let band = S1Layout::band_index(Period::Y2017To2020, Orbit::Descending, Polarization::Vh, Statistic::Median);
    println!("pooled descending VH median (band {band}) at (0,0): {:.4}", s1.get(0, 0, band));

    let s2 = tile.record.get(ModalityKind::S2).expect("fixture has S2");
    let rgb = s2_median_composite(&S2Stack::new(s2)?, &[S2Band::B04, S2Band::B03, S2Band::B02])?;
    let scaled = robust_minmax(&rgb, DEFAULT_UPPER_QUANTILE);
    println!("composite {}x{}x{}, first pixel {:?}", scaled.width(), scaled.height(), scaled.bands(),
        (0..3).map(|b| format!("{:.3}", scaled.get(0, 0, b))).collect::<Vec<_>>());

    // Masks on disk: 0 marks the structure, 255 the background.
    for class in Structure::ALL {
        let mask = &tile.masks[&class];
        let encoded = mask_encode(mask);
        assert_eq!(&mask_decode(&encoded, MaskMode::Strict)?, mask);
        println!("{class} pixels: {}", mask.count_true());
    }
    Ok(())
}
