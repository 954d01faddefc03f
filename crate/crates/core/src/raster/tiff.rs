//! Reader and writer for a constrained TIFF subset: little-endian, a single
//! IFD, uncompressed, strip-organized, pixel-interleaved samples of type
//! uint8 or float32. Anything outside the subset is rejected rather than
//! approximated, so every decoded sample is exactly what the file holds.

use std::collections::BTreeMap;
use std::path::Path;

use super::{Geometry, MaskMode, ModalityKind, Raster, RasterError, SampleType, Samples};

const IMAGE_WIDTH: u16 = 256;
const IMAGE_LENGTH: u16 = 257;
const BITS_PER_SAMPLE: u16 = 258;
const COMPRESSION: u16 = 259;
const PHOTOMETRIC: u16 = 262;
const STRIP_OFFSETS: u16 = 273;
const SAMPLES_PER_PIXEL: u16 = 277;
const ROWS_PER_STRIP: u16 = 278;
const STRIP_BYTE_COUNTS: u16 = 279;
const PLANAR_CONFIGURATION: u16 = 284;
const TILE_WIDTH: u16 = 322;
const TILE_LENGTH: u16 = 323;
const TILE_OFFSETS: u16 = 324;
const TILE_BYTE_COUNTS: u16 = 325;
const EXTRA_SAMPLES: u16 = 338;
const SAMPLE_FORMAT: u16 = 339;

const TYPE_BYTE: u16 = 1;
const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;

const PHOTOMETRIC_BLACK_IS_ZERO: u32 = 1;
const SAMPLE_FORMAT_UINT: u32 = 1;
const SAMPLE_FORMAT_IEEEFP: u32 = 3;

/// Target strip payload size for the writer.
const STRIP_TARGET_BYTES: usize = 64 * 1024;

fn malformed(msg: impl Into<String>) -> RasterError {
    RasterError::Malformed(msg.into())
}

fn unsupported(msg: impl Into<String>) -> RasterError {
    RasterError::UnsupportedFeature(msg.into())
}

fn type_size(typ: u16) -> Option<usize> {
    Some(match typ {
        1 | 2 | 6 | 7 => 1,
        3 | 8 => 2,
        4 | 9 | 11 => 4,
        5 | 10 | 12 => 8,
        _ => return None,
    })
}

#[derive(Clone, Copy)]
struct Entry {
    typ: u16,
    count: u32,
    /// Position of the 4-byte value/offset field within the file.
    field: usize,
}

struct Ifd<'a> {
    bytes: &'a [u8],
    entries: BTreeMap<u16, Entry>,
}

fn u16_at(bytes: &[u8], pos: usize) -> Result<u16, RasterError> {
    bytes
        .get(pos..pos + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| malformed(format!("unexpected end of file at byte {pos}")))
}

fn u32_at(bytes: &[u8], pos: usize) -> Result<u32, RasterError> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| malformed(format!("unexpected end of file at byte {pos}")))
}

impl<'a> Ifd<'a> {
    fn parse(bytes: &'a [u8]) -> Result<Self, RasterError> {
        if bytes.len() < 8 {
            return Err(malformed("file shorter than the 8-byte header"));
        }
        match &bytes[0..2] {
            b"II" => {}
            b"MM" => return Err(unsupported("big-endian byte order")),
            _ => return Err(malformed("missing byte-order mark")),
        }
        match u16_at(bytes, 2)? {
            42 => {}
            43 => return Err(unsupported("BigTIFF")),
            m => return Err(malformed(format!("bad magic number {m}"))),
        }
        let ifd = u32_at(bytes, 4)? as usize;
        if ifd < 8 {
            return Err(malformed(format!("IFD offset {ifd} points into the header")));
        }
        let n = u16_at(bytes, ifd)? as usize;
        if n == 0 {
            return Err(malformed("IFD has no entries"));
        }
        let mut entries = BTreeMap::new();
        for i in 0..n {
            let pos = ifd + 2 + 12 * i;
            if bytes.len() < pos + 12 {
                return Err(malformed("IFD entry table is truncated"));
            }
            let tag = u16_at(bytes, pos)?;
            let entry = Entry { typ: u16_at(bytes, pos + 2)?, count: u32_at(bytes, pos + 4)?, field: pos + 8 };
            if entries.insert(tag, entry).is_some() {
                return Err(malformed(format!("tag {tag} appears twice")));
            }
        }
        let next = u32_at(bytes, ifd + 2 + 12 * n)?;
        if next != 0 {
            return Err(unsupported("multiple IFDs"));
        }
        Ok(Self { bytes, entries })
    }

    fn has(&self, tag: u16) -> bool {
        self.entries.contains_key(&tag)
    }

    fn values(&self, tag: u16) -> Result<Option<Vec<u32>>, RasterError> {
        let Some(e) = self.entries.get(&tag) else {
            return Ok(None);
        };
        if !matches!(e.typ, TYPE_BYTE | TYPE_SHORT | TYPE_LONG) {
            return Err(malformed(format!("tag {tag} has non-integer field type {}", e.typ)));
        }
        let size = type_size(e.typ).expect("integer types have a size");
        let count = e.count as usize;
        let total = count.checked_mul(size).ok_or_else(|| malformed(format!("tag {tag} count overflows")))?;
        let start = if total <= 4 { e.field } else { u32_at(self.bytes, e.field)? as usize };
        let data = start
            .checked_add(total)
            .and_then(|end| self.bytes.get(start..end))
            .ok_or_else(|| malformed(format!("values of tag {tag} run past the end of the file")))?;
        let out = match e.typ {
            TYPE_BYTE => data.iter().map(|&b| u32::from(b)).collect(),
            TYPE_SHORT => data.chunks_exact(2).map(|c| u32::from(u16::from_le_bytes([c[0], c[1]]))).collect(),
            _ => data.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        };
        Ok(Some(out))
    }

    fn single(&self, tag: u16) -> Result<Option<u32>, RasterError> {
        match self.values(tag)? {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0])),
            Some(v) => Err(malformed(format!("tag {tag} should hold one value, holds {}", v.len()))),
        }
    }

    fn required(&self, tag: u16, name: &str) -> Result<u32, RasterError> {
        self.single(tag)?.ok_or_else(|| malformed(format!("missing required tag {name}")))
    }

    /// Per-sample tag: either one value applying to every sample or one per sample.
    fn per_sample(&self, tag: u16, name: &str, spp: usize, default: u32) -> Result<u32, RasterError> {
        let v = self.values(tag)?.unwrap_or_else(|| vec![default]);
        if v.len() != 1 && v.len() != spp {
            return Err(malformed(format!("{name} has {} values for {spp} samples per pixel", v.len())));
        }
        if v.iter().any(|&x| x != v[0]) {
            return Err(unsupported(format!("mixed {name} across bands")));
        }
        Ok(v[0])
    }
}

/// Decodes a TIFF in the supported subset into a [`Raster`] with the exact
/// stored samples.
pub fn read_tiff(bytes: &[u8]) -> Result<Raster, RasterError> {
    let ifd = Ifd::parse(bytes)?;

    if [TILE_WIDTH, TILE_LENGTH, TILE_OFFSETS, TILE_BYTE_COUNTS].iter().any(|&t| ifd.has(t)) {
        return Err(unsupported("tiled organization"));
    }
    let width = ifd.required(IMAGE_WIDTH, "ImageWidth")? as usize;
    let height = ifd.required(IMAGE_LENGTH, "ImageLength")? as usize;
    let spp = ifd.single(SAMPLES_PER_PIXEL)?.unwrap_or(1) as usize;
    if width == 0 || height == 0 || spp == 0 {
        return Err(malformed(format!("degenerate dimensions {width}x{height}x{spp}")));
    }

    match ifd.single(COMPRESSION)?.unwrap_or(1) {
        1 => {}
        c => return Err(unsupported(format!("compression scheme {c}"))),
    }
    match ifd.single(PLANAR_CONFIGURATION)?.unwrap_or(1) {
        1 => {}
        2 => return Err(unsupported("planar (band-sequential) configuration")),
        p => return Err(malformed(format!("invalid PlanarConfiguration {p}"))),
    }
    if let Some(p) = ifd.single(PHOTOMETRIC)? {
        if p > 2 {
            return Err(unsupported(format!("photometric interpretation {p}")));
        }
    }

    let bits = ifd.per_sample(BITS_PER_SAMPLE, "BitsPerSample", spp, 1)?;
    let format = ifd.per_sample(SAMPLE_FORMAT, "SampleFormat", spp, SAMPLE_FORMAT_UINT)?;
    let sample_type = match (bits, format) {
        (8, SAMPLE_FORMAT_UINT) => SampleType::U8,
        (32, SAMPLE_FORMAT_IEEEFP) => SampleType::F32,
        (b, f) => return Err(unsupported(format!("{b}-bit samples with SampleFormat {f}"))),
    };

    let offsets = ifd.values(STRIP_OFFSETS)?.ok_or_else(|| malformed("missing required tag StripOffsets"))?;
    let counts =
        ifd.values(STRIP_BYTE_COUNTS)?.ok_or_else(|| malformed("missing required tag StripByteCounts"))?;
    if offsets.len() != counts.len() {
        return Err(malformed(format!(
            "{} strip offsets but {} strip byte counts",
            offsets.len(),
            counts.len()
        )));
    }
    let rows_per_strip = match ifd.single(ROWS_PER_STRIP)? {
        Some(0) => return Err(malformed("RowsPerStrip is zero")),
        Some(r) => (r as usize).min(height),
        None => height,
    };
    let strips = height.div_ceil(rows_per_strip);
    if offsets.len() != strips {
        return Err(malformed(format!("expected {strips} strips, found {}", offsets.len())));
    }

    let row_bytes = width
        .checked_mul(spp)
        .and_then(|n| n.checked_mul(sample_type.bytes()))
        .ok_or_else(|| malformed("row size overflows"))?;
    let total = row_bytes.checked_mul(height).ok_or_else(|| malformed("image size overflows"))?;
    if total > bytes.len() {
        return Err(malformed(format!("image needs {total} bytes of samples, file has {}", bytes.len())));
    }

    let mut payload = Vec::with_capacity(total);
    for (i, (&off, &count)) in offsets.iter().zip(&counts).enumerate() {
        let rows = rows_per_strip.min(height - i * rows_per_strip);
        let need = rows * row_bytes;
        if (count as usize) < need {
            return Err(malformed(format!("strip {i} holds {count} bytes, {need} required")));
        }
        let start = off as usize;
        let strip = bytes
            .get(start..start + need)
            .ok_or_else(|| malformed(format!("strip {i} is truncated (ends past the file)")))?;
        payload.extend_from_slice(strip);
    }

    let samples = match sample_type {
        SampleType::U8 => Samples::U8(payload),
        SampleType::F32 => Samples::F32(
            payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        ),
    };
    let has_fill = matches!(&samples, Samples::F32(v) if v.iter().any(|s| !s.is_finite()));
    if has_fill {
        Raster::with_fill_values(width, height, spp, samples)
    } else {
        Raster::new(width, height, spp, samples)
    }
}

/// Decodes and checks the raster against the shape rule of `kind`.
pub fn read_tiff_as(
    bytes: &[u8],
    kind: ModalityKind,
    geometry: Geometry,
    mode: MaskMode,
) -> Result<Raster, RasterError> {
    let raster = read_tiff(bytes)?;
    kind.validate(&raster, geometry, mode)?;
    Ok(raster)
}

pub fn read_tiff_file(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| RasterError::io(path, e))?;
    read_tiff(&bytes)
}

pub fn write_tiff_file(path: impl AsRef<Path>, raster: &Raster) -> Result<(), RasterError> {
    let path = path.as_ref();
    std::fs::write(path, write_tiff(raster)).map_err(|e| RasterError::io(path, e))
}

struct OutEntry {
    tag: u16,
    typ: u16,
    values: Vec<u32>,
}

impl OutEntry {
    fn short(tag: u16, values: Vec<u32>) -> Self {
        Self { tag, typ: TYPE_SHORT, values }
    }

    fn long(tag: u16, values: Vec<u32>) -> Self {
        Self { tag, typ: TYPE_LONG, values }
    }

    fn byte_len(&self) -> usize {
        self.values.len() * if self.typ == TYPE_SHORT { 2 } else { 4 }
    }

    fn encode_values(&self, out: &mut Vec<u8>) {
        for &v in &self.values {
            if self.typ == TYPE_SHORT {
                out.extend_from_slice(&(v as u16).to_le_bytes());
            } else {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

/// Encodes a raster as a little-endian, single-IFD, uncompressed strip TIFF.
///
/// Layout: header, IFD, out-of-line tag values, then the strips. Bands past the
/// first are declared as unspecified extra samples so common readers accept
/// arbitrary band counts.
///
/// # Panics
/// Panics if the encoded file would exceed 4 GiB (not addressable by 32-bit offsets).
pub fn write_tiff(raster: &Raster) -> Vec<u8> {
    let (w, h, b) = (raster.width(), raster.height(), raster.bands());
    let sample_type = raster.sample_type();
    let row_bytes = w * b * sample_type.bytes();
    let rows_per_strip = (STRIP_TARGET_BYTES / row_bytes).clamp(1, h);
    let strips = h.div_ceil(rows_per_strip);
    let strip_counts: Vec<u32> = (0..strips)
        .map(|i| (rows_per_strip.min(h - i * rows_per_strip) * row_bytes) as u32)
        .collect();
    let (bits, format) = match sample_type {
        SampleType::U8 => (8, SAMPLE_FORMAT_UINT),
        SampleType::F32 => (32, SAMPLE_FORMAT_IEEEFP),
    };

    let mut entries = vec![
        OutEntry::long(IMAGE_WIDTH, vec![w as u32]),
        OutEntry::long(IMAGE_LENGTH, vec![h as u32]),
        OutEntry::short(BITS_PER_SAMPLE, vec![bits; b]),
        OutEntry::short(COMPRESSION, vec![1]),
        OutEntry::short(PHOTOMETRIC, vec![PHOTOMETRIC_BLACK_IS_ZERO]),
        OutEntry::long(STRIP_OFFSETS, vec![0; strips]),
        OutEntry::short(SAMPLES_PER_PIXEL, vec![b as u32]),
        OutEntry::long(ROWS_PER_STRIP, vec![rows_per_strip as u32]),
        OutEntry::long(STRIP_BYTE_COUNTS, strip_counts),
        OutEntry::short(PLANAR_CONFIGURATION, vec![1]),
    ];
    if b > 1 {
        entries.push(OutEntry::short(EXTRA_SAMPLES, vec![0; b - 1]));
    }
    entries.push(OutEntry::short(SAMPLE_FORMAT, vec![format; b]));

    let ifd_len = 2 + 12 * entries.len() + 4;
    let mut cursor = 8 + ifd_len;
    let mut value_offsets = Vec::with_capacity(entries.len());
    for e in &entries {
        if e.byte_len() > 4 {
            value_offsets.push(Some(cursor));
            cursor += e.byte_len();
            cursor += cursor % 2;
        } else {
            value_offsets.push(None);
        }
    }
    let data_start = cursor;
    let payload_len = row_bytes * h;
    assert!(
        data_start + payload_len <= u32::MAX as usize,
        "raster too large for a 32-bit TIFF"
    );
    let mut off = data_start;
    if let Some(entry) = entries.iter_mut().find(|e| e.tag == STRIP_OFFSETS) {
        for (i, v) in entry.values.iter_mut().enumerate() {
            *v = off as u32;
            off += rows_per_strip.min(h - i * rows_per_strip) * row_bytes;
        }
    }

    let mut out = Vec::with_capacity(data_start + payload_len);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&8u32.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    for (e, value_offset) in entries.iter().zip(&value_offsets) {
        out.extend_from_slice(&e.tag.to_le_bytes());
        out.extend_from_slice(&e.typ.to_le_bytes());
        out.extend_from_slice(&(e.values.len() as u32).to_le_bytes());
        match value_offset {
            Some(pos) => out.extend_from_slice(&(*pos as u32).to_le_bytes()),
            None => {
                let start = out.len();
                e.encode_values(&mut out);
                out.resize(start + 4, 0);
            }
        }
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    for (e, value_offset) in entries.iter().zip(&value_offsets) {
        if let Some(pos) = value_offset {
            debug_assert_eq!(out.len(), *pos);
            e.encode_values(&mut out);
            if out.len() % 2 == 1 {
                out.push(0);
            }
        }
    }
    debug_assert_eq!(out.len(), data_start);
    match raster.samples() {
        Samples::U8(v) => out.extend_from_slice(v),
        Samples::F32(v) => v.iter().for_each(|s| out.extend_from_slice(&s.to_le_bytes())),
    }
    out
}
