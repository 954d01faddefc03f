//! Write a small dataset to disk, read one raster back, then scan and
//! validate the whole directory.
//!
//! ```bash
//! cargo run --example raster_io
//! ```

use mayakit::fixtures::{generate_fixtures, write_fixtures, FixtureConfig};
use mayakit::raster::{read_tiff_file, scan_dataset, Geometry, ScanOptions};
use mayakit::{ModalityKind, Raster};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let geometry = Geometry { sentinel_side: 8, als_side: 64 };
    let config = FixtureConfig { geometry, ..FixtureConfig::new(4, 11) };
    let tiles = generate_fixtures(&config)?;
    let written = write_fixtures(dir.path(), &tiles)?;
    println!("wrote {} files to {}", written.len(), dir.path().display());

    let als = read_tiff_file(dir.path().join("tile_1_lidar.tif"))?;
    assert_eq!(Some(&als), tiles[1].record.get(ModalityKind::Als));
    println!("tile 1 lidar: {}x{}x{} {:?}", als.width(), als.height(), als.bands(), als.sample_type());

    // A stray file with the wrong band count shows up in the report.
    let broken = Raster::zeros(64, 64, 2, mayakit::SampleType::U8)?;
    mayakit::raster::write_tiff_file(dir.path().join("tile_9_lidar.tif"), &broken)?;

    let outcome = scan_dataset(dir.path(), &ScanOptions { geometry, ..ScanOptions::default() })?;
    println!("{} complete tiles, {} file error(s)", outcome.records.len(), outcome.error_count());
    for e in outcome.errors() {
        println!("  {}: {}", e.path, e.message);
    }
    Ok(())
}
