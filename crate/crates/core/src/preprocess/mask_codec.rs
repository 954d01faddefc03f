//! The 0/255 mask file encoding: 0 means the structure is present, 255 absent.

use super::PreprocessError;
use crate::mask::BinaryMask;
use crate::raster::{MaskMode, Raster, SampleType};

pub const PRESENT: u8 = 0;
pub const ABSENT: u8 = 255;

pub fn mask_decode(raster: &Raster, mode: MaskMode) -> Result<BinaryMask, PreprocessError> {
    if raster.bands() != 1 || raster.sample_type() != SampleType::U8 {
        return Err(PreprocessError::InconsistentShape(format!(
            "masks are single-band uint8, got {} {:?} bands",
            raster.bands(),
            raster.sample_type()
        )));
    }
    let data = raster.as_u8().expect("checked above");
    let bits = match mode {
        MaskMode::Strict => data
            .iter()
            .enumerate()
            .map(|(index, &v)| match v {
                PRESENT => Ok(true),
                ABSENT => Ok(false),
                value => Err(PreprocessError::InvalidMaskValue { index, value }),
            })
            .collect::<Result<Vec<_>, _>>()?,
        MaskMode::Lenient => data.iter().map(|&v| v < 128).collect(),
    };
    Ok(BinaryMask::from_bits(raster.width(), raster.height(), bits).expect("shape from a valid raster"))
}

pub fn mask_encode(mask: &BinaryMask) -> Raster {
    let data = mask.bits().iter().map(|&b| if b { PRESENT } else { ABSENT }).collect();
    Raster::from_u8(mask.width(), mask.height(), 1, data).expect("shape from a valid mask")
}
