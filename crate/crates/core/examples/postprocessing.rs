//! Thresholding, blob filtering and hole filling of a probability map.

use mayakit::postprocess::{connected_components, postprocess_pipeline, PostprocessConfig, ProbabilityThreshold};
use mayakit::ProbMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = [
        "..........",
        ".####.....",
        ".#..#...#.",
        ".####.....",
        "..........",
        "......##..",
        "#.....##..",
    ];
    let (w, h) = (rows[0].len(), rows.len());
    let values = rows.iter().flat_map(|r| r.chars().map(|c| if c == '#' { 0.6 } else { 0.2 })).collect();
    let prob = ProbMap::new(w, h, values)?;

    for t in [0.5, 0.216] {
        let level = ProbabilityThreshold::from_fraction(t);
        println!("t = {t}: level {}, admits p >= {:.4}", level.level(), level.min_admitted_fraction());
    }

    let config = PostprocessConfig { probability_threshold: 0.5, min_area: 3, min_area_boundary: 2, fill_holes: true };
    let mask = postprocess_pipeline(&prob, &config);
    println!("{}", mask.to_ascii());
    for r in connected_components(&mask) {
        println!("region at {:?}: area {}, on border {}", r.bbox, r.area(), r.touches_boundary);
    }
    Ok(())
}
