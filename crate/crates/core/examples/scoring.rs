//! Per-tile metrics, dataset scores and a leaderboard.

use std::collections::BTreeMap;

use mayakit::evaluate::{dataset_score, leaderboard, leaderboard_csv, tile_metrics, LeaderboardEntry};
use mayakit::{BinaryMask, Structure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = BinaryMask::from_ascii(&["....", ".##.", ".##.", "...."])?;
    let pred = BinaryMask::from_ascii(&["....", ".###", ".##.", "...."])?;
    let m = tile_metrics(&pred, &truth)?;
    println!("IoU+ {:.4} IoU- {:.4} mIoU {:.4} TPR {:.4} PPV {:.4}", m.iou_pos, m.iou_neg, m.miou, m.tpr, m.ppv);

    // Both empty counts as a perfect tile.
    let empty = BinaryMask::new(4, 4)?;
    println!("empty vs empty IoU+: {}", tile_metrics(&empty, &empty)?.iou_pos);

    let mut per_tile = BTreeMap::new();
    per_tile.insert(1, BTreeMap::from([(Structure::Aguada, 1.0), (Structure::Building, 0.6), (Structure::Platform, 0.5)]));
    per_tile.insert(2, BTreeMap::from([(Structure::Aguada, 0.9), (Structure::Building, 0.8), (Structure::Platform, 0.7)]));
    let score = dataset_score(&per_tile)?;
    println!("per class {:?}, overall {:.4}", score.per_class, score.overall);

    let rows = leaderboard(&[
        LeaderboardEntry::from_score("ours", &score),
        LeaderboardEntry::new("baseline", 0.95, 0.55, 0.65),
        LeaderboardEntry::new("runner-up", 0.95, 0.6, 0.75),
    ]);
    print!("{}", leaderboard_csv(&rows));
    Ok(())
}
