//! The dihedral group and the training-time augmentation presets.

use mayakit::augment::{augment_sample, gaussian_blur, DihedralElement, Preset};
use mayakit::rng::item_rng;
use mayakit::{BinaryMask, Raster};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mask = BinaryMask::from_ascii(&["#..", "##.", "..."])?;
    for e in DihedralElement::ALL {
        let t = e.apply_mask(&mask)?;
        assert_eq!(e.inverse().apply_mask(&t)?, mask);
        println!("{:>7}: {}", e.name(), t.to_ascii().replace('\n', " "));
    }

    let side = 64;
    let image = Raster::from_f32(side, side, 1, (0..side * side).map(|i| (i % side) as f32 / side as f32).collect())?;
    let masks = vec![BinaryMask::from_fn(side, side, |x, y| (20..40).contains(&x) && (10..30).contains(&y))?];
    for preset in [Preset::DihedralOnly, Preset::Standard] {
        let config = preset.config();
        for i in 0..3 {
            let (img, m) = augment_sample(&image, &masks, &config, &mut item_rng(1, i))?;
            println!("{:>13} #{i}: {}x{}, {} mask pixels, corner {:.3}", preset.name(), img.width(), img.height(), m[0].count_true(), img.get(0, 0, 0));
        }
    }

    let blurred = gaussian_blur(&image, 5, 1.5)?;
    println!("blurred edge pixel {:.4} -> {:.4}", image.get(0, 5, 0), blurred.get(0, 5, 0));
    Ok(())
}
