use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{read_tiff, Geometry, MaskMode, ModalityKind, RasterError, TileRecord};

/// File naming convention with `{id}` and `{modality}` placeholders,
/// e.g. `tile_{id}_{modality}.tif`.
#[derive(Clone, Debug)]
pub struct NamingPattern {
    template: String,
    regex: Regex,
}

impl NamingPattern {
    pub const DEFAULT: &'static str = "tile_{id}_{modality}.tif";

    pub fn new(template: &str) -> Result<Self, RasterError> {
        if template.matches("{id}").count() != 1 || template.matches("{modality}").count() != 1 {
            return Err(RasterError::InvalidPattern(template.to_string()));
        }
        let mut re = String::from("^");
        let mut rest = template;
        while let Some(start) = rest.find('{') {
            re.push_str(&regex::escape(&rest[..start]));
            if rest[start..].starts_with("{id}") {
                re.push_str(r"(?P<id>\d+)");
                rest = &rest[start + 4..];
            } else if rest[start..].starts_with("{modality}") {
                re.push_str(r"(?P<modality>[A-Za-z0-9_]+)");
                rest = &rest[start + 10..];
            } else {
                re.push_str(r"\{");
                rest = &rest[start + 1..];
            }
        }
        re.push_str(&regex::escape(rest));
        re.push('$');
        let regex = Regex::new(&re).map_err(|_| RasterError::InvalidPattern(template.to_string()))?;
        Ok(Self { template: template.to_string(), regex })
    }

    /// File name for a tile and modality token.
    pub fn file_name(&self, tile_id: u64, modality: &str) -> String {
        self.template.replace("{id}", &tile_id.to_string()).replace("{modality}", modality)
    }

    /// Splits a file name into `(tile id, modality token)`.
    pub fn parse<'a>(&self, file_name: &'a str) -> Option<(u64, &'a str)> {
        let caps = self.regex.captures(file_name)?;
        let id = caps.name("id")?.as_str().parse().ok()?;
        Some((id, caps.name("modality")?.as_str()))
    }

    pub fn template(&self) -> &str {
        &self.template
    }
}

impl Default for NamingPattern {
    fn default() -> Self {
        Self::new(Self::DEFAULT).expect("default pattern is valid")
    }
}

#[derive(Clone, Debug, Default)]
pub struct ScanOptions {
    pub pattern: NamingPattern,
    pub geometry: Geometry,
    pub mask_mode: MaskMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationStatus {
    Ok,
    Error,
    Skipped,
}

/// One line of the validation report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub path: String,
    pub kind: Option<String>,
    pub status: ValidationStatus,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ScanOutcome {
    /// One record per distinct tile id, ordered by id.
    pub records: Vec<TileRecord>,
    /// One entry per file, ordered by file name.
    pub report: Vec<ValidationEntry>,
}

impl ScanOutcome {
    pub fn error_count(&self) -> usize {
        self.report.iter().filter(|e| e.status == ValidationStatus::Error).count()
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationEntry> {
        self.report.iter().filter(|e| e.status == ValidationStatus::Error)
    }

    /// The report as JSON lines, one object per file.
    pub fn report_json_lines(&self) -> String {
        self.report
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain struct serializes") + "\n")
            .collect()
    }
}

/// Discovers tiles in `dir`, validating each raster against its modality.
///
/// Per-file problems (unreadable TIFFs, shape mismatches, duplicate
/// modalities) are recorded in the report and scanning continues. Only a
/// directory that cannot be listed is an error. Files are processed in
/// file-name order, so the outcome does not depend on listing order.
pub fn scan_dataset(dir: impl AsRef<Path>, options: &ScanOptions) -> Result<ScanOutcome, RasterError> {
    let dir = dir.as_ref();
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| RasterError::io(dir, e))? {
        let entry = entry.map_err(|e| RasterError::io(dir, e))?;
        if entry.file_type().map_err(|e| RasterError::io(&entry.path(), e))?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    Ok(scan_files(dir, names, options))
}

enum Parsed {
    Skipped(String),
    Tile { tile_id: u64, kind: ModalityKind, result: Result<super::Raster, RasterError> },
}

fn scan_files(dir: &Path, mut names: Vec<String>, options: &ScanOptions) -> ScanOutcome {
    names.sort();
    let parsed: Vec<(String, Parsed)> = names
        .into_par_iter()
        .map(|name| {
            let parsed = match options.pattern.parse(&name) {
                None => Parsed::Skipped("file name does not match the naming pattern".into()),
                Some((tile_id, token)) => match token.parse::<ModalityKind>() {
                    Err(e) => Parsed::Skipped(e),
                    Ok(kind) => {
                        let path: PathBuf = dir.join(&name);
                        let result = std::fs::read(&path)
                            .map_err(|e| RasterError::io(&path, e))
                            .and_then(|bytes| read_tiff(&bytes))
                            .and_then(|r| kind.validate(&r, options.geometry, options.mask_mode).map(|_| r));
                        Parsed::Tile { tile_id, kind, result }
                    }
                },
            };
            (name, parsed)
        })
        .collect();

    let mut records: BTreeMap<u64, TileRecord> = BTreeMap::new();
    let mut report = Vec::with_capacity(parsed.len());
    for (path, parsed) in parsed {
        let entry = match parsed {
            Parsed::Skipped(message) => {
                ValidationEntry { path, kind: None, status: ValidationStatus::Skipped, message }
            }
            Parsed::Tile { tile_id, kind, result } => {
                let record = records.entry(tile_id).or_insert_with(|| TileRecord::new(tile_id));
                let outcome = result.and_then(|raster| record.insert(kind, raster));
                let (status, message) = match outcome {
                    Ok(()) => (ValidationStatus::Ok, String::new()),
                    Err(e) => (ValidationStatus::Error, e.to_string()),
                };
                ValidationEntry { path, kind: Some(kind.token()), status, message }
            }
        };
        report.push(entry);
    }
    ScanOutcome { records: records.into_values().collect(), report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{write_tiff, Raster};

    #[test]
    fn pattern_parsing() {
        let p = NamingPattern::default();
        assert_eq!(p.parse("tile_7_lidar.tif"), Some((7, "lidar")));
        assert_eq!(p.parse("tile_12_mask_building.tif"), Some((12, "mask_building")));
        assert_eq!(p.parse("tile_x_lidar.tif"), None);
        assert_eq!(p.file_name(3, "s2"), "tile_3_s2.tif");

        let custom = NamingPattern::new("{modality}-{id}.tiff").unwrap();
        assert_eq!(custom.parse("lidar-0042.tiff"), Some((42, "lidar")));
        assert!(NamingPattern::new("tile_{id}.tif").is_err());
    }

    fn small_options() -> ScanOptions {
        ScanOptions { geometry: Geometry { sentinel_side: 2, als_side: 4 }, ..Default::default() }
    }

    #[test]
    fn listing_order_does_not_matter() {
        let dir = tempfile::tempdir().unwrap();
        let opts = small_options();
        let lidar = Raster::from_u8(4, 4, 3, vec![9; 48]).unwrap();
        let mask = Raster::from_u8(4, 4, 1, vec![255; 16]).unwrap();
        for id in [1u64, 2] {
            std::fs::write(dir.path().join(format!("tile_{id}_lidar.tif")), write_tiff(&lidar)).unwrap();
            std::fs::write(dir.path().join(format!("tile_{id}_mask_aguada.tif")), write_tiff(&mask)).unwrap();
        }
        let names = vec![
            "tile_2_mask_aguada.tif".to_string(),
            "tile_1_lidar.tif".into(),
            "tile_2_lidar.tif".into(),
            "tile_1_mask_aguada.tif".into(),
        ];
        let mut reversed = names.clone();
        reversed.reverse();
        let a = scan_files(dir.path(), names, &opts);
        let b = scan_files(dir.path(), reversed, &opts);
        assert_eq!(a.records, b.records);
        assert_eq!(a.report, b.report);
        assert_eq!(a.records.len(), 2);
    }

    #[test]
    fn duplicate_modality_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let lidar = Raster::from_u8(4, 4, 3, vec![1; 48]).unwrap();
        std::fs::write(dir.path().join("tile_7_lidar.tif"), write_tiff(&lidar)).unwrap();
        std::fs::write(dir.path().join("tile_007_lidar.tif"), write_tiff(&lidar)).unwrap();
        let out = scan_dataset(dir.path(), &small_options()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.error_count(), 1);
        assert!(out.errors().next().unwrap().message.contains("already has"));
    }
}
