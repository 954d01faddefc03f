//! Command-line front end. Every subcommand reads its inputs, writes its
//! outputs plus a `<command>.manifest.json` into `--out`, and prints a JSON
//! summary. Failures print `{"error": ..., "message": ...}` to stderr and
//! exit nonzero.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::augment::{augment_sample, AugmentConfig, Preset};
use crate::dataset::{
    measure_distribution, oversample, stratified_kfold, weighted_sample, LabeledTile, SamplerWeights, Stratification,
    DEFAULT_FRACTION_THRESHOLDS,
};
use crate::ensemble::{hard_vote, prob_file_name, read_prob_map, soft_vote, tta_predict_classes, PredictorSpec, Roster};
use crate::evaluate::{leaderboard, leaderboard_csv, mask_file_name, score_submission, LeaderboardEntry};
use crate::fixtures::{generate_fixtures, write_fixtures, FixtureConfig, DEFAULT_TILES};
use crate::manifest::RunManifest;
use crate::mask::{BinaryMask, ProbMap};
use crate::postprocess::{binarize, postprocess_pipeline, ClassPostprocessConfig, ProbabilityThreshold};
use crate::preprocess::{
    build_s1_tile, mask_decode, mask_encode, robust_minmax, s2_median_composite, Acquisition, InputScale, Orbit,
    Polarization, PreprocessManifest, S2Band, S2Stack, DEFAULT_UPPER_QUANTILE,
};
use crate::raster::{
    read_tiff_file, scan_dataset, write_tiff_file, Geometry, MaskMode, ModalityKind, NamingPattern, Raster, ScanOptions,
    TileRecord,
};
use crate::rng::item_rng;
use crate::synthgen::{generate_dataset, CropStyle, SourceTile, SynthConfig};
use crate::Structure;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    ConfigInvalid(String),
    #[error("{0}")]
    InputMissing(String),
    #[error("{stage}: {message}")]
    StageFailure { stage: &'static str, message: String },
    #[error("{0} file(s) failed validation")]
    ValidationFailed(usize),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ConfigInvalid(_) => "ConfigInvalid",
            CliError::InputMissing(_) => "InputMissing",
            CliError::StageFailure { .. } => "StageFailure",
            CliError::ValidationFailed(_) => "ValidationFailed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ValidationFailed(_) => 1,
            CliError::ConfigInvalid(_) => 2,
            CliError::InputMissing(_) => 3,
            CliError::StageFailure { .. } => 4,
        }
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::StageFailure { stage, message: e.to_string() }
}

/// Optional JSON file passed with `--config`; command-line flags win.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub geometry: Option<Geometry>,
    pub s1_input_scale: Option<InputScale>,
    pub s2_channels: Option<Vec<S2Band>>,
    pub upper_quantile: Option<f64>,
    pub synth: Option<SynthSection>,
    pub sampling: Option<SamplerWeights>,
    pub augment: Option<AugmentConfig>,
    pub roster: Option<Roster>,
    pub postprocess: Option<ClassPostprocessConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub class: Structure,
    pub style: CropStyle,
    pub count: usize,
    #[serde(default = "one")]
    pub instances_per_sample: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Parser)]
#[command(name = "mayakit", version, about = "Segmentation pipeline tooling for lidar and satellite tiles")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Augmentation preset: standard, extended or dihedral-only.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// ALS and mask side length in pixels.
    #[arg(long, global = true)]
    pub als_side: Option<usize>,
    /// Sentinel side length in pixels.
    #[arg(long, global = true)]
    pub sentinel_side: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every file of a dataset directory against the format rules.
    Validate {
        dir: PathBuf,
        /// Treat mask values below 128 as present instead of rejecting non-0/255 values.
        #[arg(long)]
        lenient: bool,
        #[arg(long, default_value = NamingPattern::DEFAULT)]
        pattern: String,
    },
    /// Build 120-band Sentinel-1 statistics tiles from raw acquisitions.
    #[command(name = "preprocess-s1")]
    PreprocessS1 {
        /// Directory of `tile_<id>_s1raw_<vv|vh>_<asc|desc>_<year>_<k>.tif` files.
        raw_dir: PathBuf,
        /// linear, db or unit.
        #[arg(long, default_value = "linear")]
        scale: String,
    },
    /// Cloud-free median composites of Sentinel-2 stacks, robustly scaled.
    #[command(name = "preprocess-s2")]
    PreprocessS2 {
        dir: PathBuf,
        /// Comma-separated band names, e.g. B02,B03,B04,B08.
        #[arg(long)]
        channels: Option<String>,
        #[arg(long)]
        upper_quantile: Option<f64>,
    },
    /// Generate copy-paste synthetic tiles.
    Synth {
        dir: PathBuf,
        #[arg(long)]
        class: Option<Structure>,
        /// rectangular, pixel-precise or padded:<n>.
        #[arg(long)]
        style: Option<CropStyle>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
        /// First id given to generated tiles.
        #[arg(long, default_value_t = 100_000)]
        id_offset: u64,
    },
    /// Assign tiles to stratified folds.
    Split {
        dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// none, presence:<class> or bins:<class>[:t1,t2,...].
        #[arg(long, default_value = "presence:building")]
        strategy: String,
    },
    /// Class distribution and class-weighted tile draws.
    Sample {
        dir: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// equal, or background,aguada,building,platform weights.
        #[arg(long)]
        weights: Option<String>,
        /// <class>:<factor> duplication applied to the listed tile order.
        #[arg(long)]
        oversample: Option<String>,
    },
    /// Augment every tile's ALS raster and masks.
    Augment { dir: PathBuf },
    /// Run roster predictors with test-time augmentation.
    Predict {
        dir: PathBuf,
        /// Number of jittered heuristic variants when no roster is configured.
        #[arg(long, default_value_t = 3)]
        variants: usize,
        #[arg(long)]
        no_tta: bool,
    },
    /// Combine per-model probability maps per class.
    Ensemble {
        prob_dir: PathBuf,
        /// soft (mean of probabilities) or hard (majority of masks at 0.5).
        #[arg(long, default_value = "soft")]
        vote: String,
        #[arg(long, default_value_t = 3)]
        variants: usize,
    },
    /// Threshold, filter and fill ensembled probability maps into masks.
    Postprocess { prob_dir: PathBuf },
    /// Score predicted masks against ground truth.
    Score {
        pred_dir: PathBuf,
        truth_dir: PathBuf,
        #[arg(long, default_value = "submission")]
        name: String,
    },
    /// Rank entries (JSON list of name/aguadas/platforms/buildings).
    Leaderboard { entries: PathBuf },
    /// Write the synthetic desk-scale dataset.
    Fixtures {
        #[arg(long, default_value_t = DEFAULT_TILES)]
        tiles: usize,
        /// Also write raw Sentinel-1 acquisitions under raw_s1/.
        #[arg(long)]
        raw_s1: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::PreprocessS1 { .. } => "preprocess-s1",
            Command::PreprocessS2 { .. } => "preprocess-s2",
            Command::Synth { .. } => "synth",
            Command::Split { .. } => "split",
            Command::Sample { .. } => "sample",
            Command::Augment { .. } => "augment",
            Command::Predict { .. } => "predict",
            Command::Ensemble { .. } => "ensemble",
            Command::Postprocess { .. } => "postprocess",
            Command::Score { .. } => "score",
            Command::Leaderboard { .. } => "leaderboard",
            Command::Fixtures { .. } => "fixtures",
        }
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let err = CliError::ConfigInvalid(e.to_string().trim().to_string());
            report_error(stderr, &err);
            return err.exit_code();
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&summary).expect("json"));
            0
        }
        Err((summary, err)) => {
            if let Some(s) = summary {
                let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&s).expect("json"));
            }
            report_error(stderr, &err);
            err.exit_code()
        }
    }
}

fn report_error(stderr: &mut dyn Write, err: &CliError) {
    let body = json!({"error": err.kind(), "message": err.to_string()});
    let _ = writeln!(stderr, "{body}");
}

type Outcome = Result<Value, (Option<Value>, CliError)>;

fn execute(cli: &Cli) -> Outcome {
    if cli.global.jobs == 0 {
        return Err((None, CliError::ConfigInvalid("--jobs must be at least 1".into())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.jobs)
        .build()
        .map_err(|e| (None, CliError::ConfigInvalid(e.to_string())))?;
    pool.install(|| {
        let ctx = Context::new(&cli.global).map_err(|e| (None, e))?;
        dispatch(&ctx, &cli.command)
    })
}

struct Context {
    global: GlobalArgs,
    config: PipelineConfig,
    geometry: Geometry,
}

impl Context {
    fn new(global: &GlobalArgs) -> Result<Self, CliError> {
        let config = match &global.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::InputMissing(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))?
            }
            None => PipelineConfig::default(),
        };
        let mut geometry = config.geometry.unwrap_or_default();
        if let Some(s) = global.als_side {
            geometry.als_side = s;
        }
        if let Some(s) = global.sentinel_side {
            geometry.sentinel_side = s;
        }
        if geometry.als_side == 0 || geometry.sentinel_side == 0 {
            return Err(CliError::ConfigInvalid("tile sides must be positive".into()));
        }
        Ok(Self { global: global.clone(), config, geometry })
    }

    fn seed(&self) -> Result<u64, CliError> {
        self.global
            .seed
            .or(self.config.seed)
            .ok_or_else(|| CliError::ConfigInvalid("this command is stochastic and needs --seed or a config seed".into()))
    }

    fn out(&self) -> Result<&Path, CliError> {
        let out = self.global.out.as_deref().ok_or_else(|| CliError::ConfigInvalid("--out is required".into()))?;
        std::fs::create_dir_all(out).map_err(|e| CliError::StageFailure { stage: "output", message: e.to_string() })?;
        Ok(out)
    }

    fn scan_options(&self, mask_mode: MaskMode) -> ScanOptions {
        ScanOptions { geometry: self.geometry, mask_mode, ..ScanOptions::default() }
    }

    fn write_manifest(&self, command: &str, seed: Option<u64>, config: Value, outputs: Vec<String>) -> Result<(), CliError> {
        let out = self.out()?;
        let manifest = RunManifest::new(command, seed, config, outputs);
        manifest
            .write(&out.join(format!("{command}.manifest.json")))
            .map_err(|e| CliError::StageFailure { stage: "manifest", message: e.to_string() })
    }
}

fn require_dir(dir: &Path) -> Result<(), CliError> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::InputMissing(format!("{} is not a directory", dir.display())))
    }
}

fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    std::fs::write(path, text).map_err(|e| CliError::StageFailure { stage: "output", message: e.to_string() })
}

fn dispatch(ctx: &Context, command: &Command) -> Outcome {
    let name = command.name();
    let plain = |r: Result<Value, CliError>| r.map_err(|e| (None, e));
    match command {
        Command::Validate { dir, lenient, pattern } => cmd_validate(ctx, dir, *lenient, pattern),
        Command::PreprocessS1 { raw_dir, scale } => plain(cmd_preprocess_s1(ctx, raw_dir, scale)),
        Command::PreprocessS2 { dir, channels, upper_quantile } => {
            plain(cmd_preprocess_s2(ctx, dir, channels.as_deref(), *upper_quantile))
        }
        Command::Synth { dir, class, style, count, instances, id_offset } => {
            plain(cmd_synth(ctx, dir, *class, *style, *count, *instances, *id_offset))
        }
        Command::Split { dir, k, strategy } => plain(cmd_split(ctx, dir, *k, strategy)),
        Command::Sample { dir, n, weights, oversample } => {
            plain(cmd_sample(ctx, dir, *n, weights.as_deref(), oversample.as_deref()))
        }
        Command::Augment { dir } => plain(cmd_augment(ctx, dir)),
        Command::Predict { dir, variants, no_tta } => plain(cmd_predict(ctx, dir, *variants, !*no_tta)),
        Command::Ensemble { prob_dir, vote, variants } => plain(cmd_ensemble(ctx, prob_dir, vote, *variants)),
        Command::Postprocess { prob_dir } => plain(cmd_postprocess(ctx, prob_dir)),
        Command::Score { pred_dir, truth_dir, name } => plain(cmd_score(ctx, pred_dir, truth_dir, name)),
        Command::Leaderboard { entries } => plain(cmd_leaderboard(ctx, entries)),
        Command::Fixtures { tiles, raw_s1 } => plain(cmd_fixtures(ctx, *tiles, *raw_s1)),
    }
    .map(|mut v| {
        v["command"] = json!(name);
        v
    })
}

fn cmd_validate(ctx: &Context, dir: &Path, lenient: bool, pattern: &str) -> Outcome {
    let fail = |e: CliError| (None, e);
    require_dir(dir).map_err(fail)?;
    let pattern = NamingPattern::new(pattern).map_err(|e| fail(CliError::ConfigInvalid(e.to_string())))?;
    let mode = if lenient { MaskMode::Lenient } else { MaskMode::Strict };
    let options = ScanOptions { pattern, ..ctx.scan_options(mode) };
    let outcome = scan_dataset(dir, &options).map_err(|e| fail(stage("validate")(e)))?;
    let errors = outcome.error_count();
    let summary = json!({
        "files": outcome.report.len(),
        "tiles": outcome.records.len(),
        "errors": errors,
        "failures": outcome.errors().collect::<Vec<_>>(),
    });
    if ctx.global.out.is_some() {
        let out = ctx.out().map_err(fail)?;
        std::fs::write(out.join("validation.jsonl"), outcome.report_json_lines())
            .map_err(|e| fail(stage("output")(e)))?;
        let config = json!({"dir": dir, "pattern": options.pattern.template(), "lenient": lenient, "geometry": ctx.geometry});
        ctx.write_manifest("validate", None, config, vec!["validation.jsonl".into()]).map_err(fail)?;
    }
    if errors > 0 {
        let mut summary = summary;
        summary["command"] = json!("validate");
        return Err((Some(summary), CliError::ValidationFailed(errors)));
    }
    Ok(summary)
}

fn parse_raw_s1_name(name: &str) -> Option<(u64, Polarization, Orbit, u16)> {
    let re = Regex::new(r"^tile_(\d+)_s1raw_(vv|vh)_(asc|desc)_(\d{4})_\d+\.tif$").expect("static pattern");
    let c = re.captures(name)?;
    let pol = if &c[2] == "vv" { Polarization::Vv } else { Polarization::Vh };
    let orbit = if &c[3] == "asc" { Orbit::Ascending } else { Orbit::Descending };
    Some((c[1].parse().ok()?, pol, orbit, c[4].parse().ok()?))
}

fn cmd_preprocess_s1(ctx: &Context, raw_dir: &Path, scale: &str) -> Result<Value, CliError> {
    require_dir(raw_dir)?;
    let scale = match ctx.config.s1_input_scale {
        Some(s) => s,
        None => match scale {
            "linear" => InputScale::LinearSigma0,
            "db" => InputScale::Decibel,
            "unit" => InputScale::Unit,
            other => return Err(CliError::ConfigInvalid(format!("unknown input scale `{other}`"))),
        },
    };
    let mut names: Vec<String> = std::fs::read_dir(raw_dir)
        .map_err(stage("preprocess-s1"))?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| parse_raw_s1_name(n).is_some())
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::InputMissing(format!("no raw Sentinel-1 files in {}", raw_dir.display())));
    }
    let mut groups: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for n in names {
        let (id, ..) = parse_raw_s1_name(&n).expect("filtered");
        groups.entry(id).or_default().push(n);
    }
    let out = ctx.out()?;
    let pattern = NamingPattern::default();
    let written = groups
        .par_iter()
        .map(|(&id, files)| {
            let acquisitions = files
                .iter()
                .map(|n| {
                    let (_, polarization, orbit, year) = parse_raw_s1_name(n).expect("filtered");
                    let raster = read_tiff_file(raw_dir.join(n)).map_err(stage("preprocess-s1"))?;
                    Ok(Acquisition { polarization, orbit, year, raster })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let tile = build_s1_tile(&acquisitions, scale).map_err(stage("preprocess-s1"))?;
            let path = out.join(pattern.file_name(id, &ModalityKind::S1.token()));
            write_tiff_file(&path, &tile).map_err(stage("preprocess-s1"))?;
            Ok(path)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let manifest = PreprocessManifest::new(scale, Vec::new(), ctx.config.upper_quantile.unwrap_or(DEFAULT_UPPER_QUANTILE));
    let config = json!({"raw_dir": raw_dir, "preprocess": manifest});
    let outputs = file_names(&written);
    ctx.write_manifest("preprocess-s1", None, config, outputs.clone())?;
    Ok(json!({"tiles": written.len(), "outputs": outputs}))
}

fn parse_channels(list: &str) -> Result<Vec<S2Band>, CliError> {
    list.split(',')
        .map(|c| {
            let c = c.trim();
            S2Band::SPECTRAL
                .into_iter()
                .find(|b| format!("{b:?}").eq_ignore_ascii_case(c))
                .ok_or_else(|| CliError::ConfigInvalid(format!("unknown Sentinel-2 band `{c}`")))
        })
        .collect()
}

fn cmd_preprocess_s2(
    ctx: &Context,
    dir: &Path,
    channels: Option<&str>,
    upper_quantile: Option<f64>,
) -> Result<Value, CliError> {
    require_dir(dir)?;
    let channels = match (channels, &ctx.config.s2_channels) {
        (Some(list), _) => parse_channels(list)?,
        (None, Some(c)) => c.clone(),
        (None, None) => S2Band::DEFAULT_COMPOSITE.to_vec(),
    };
    let q = upper_quantile.or(ctx.config.upper_quantile).unwrap_or(DEFAULT_UPPER_QUANTILE);
    if !(0.0..=1.0).contains(&q) {
        return Err(CliError::ConfigInvalid(format!("upper quantile {q} is outside [0, 1]")));
    }
    let outcome = scan_dataset(dir, &ctx.scan_options(MaskMode::Strict)).map_err(stage("preprocess-s2"))?;
    let tiles: Vec<&TileRecord> = outcome.records.iter().filter(|r| r.get(ModalityKind::S2).is_some()).collect();
    if tiles.is_empty() {
        return Err(CliError::InputMissing(format!("no valid Sentinel-2 tiles in {}", dir.display())));
    }
    let out = ctx.out()?;
    let written = tiles
        .par_iter()
        .map(|t| {
            let stack = S2Stack::new(t.get(ModalityKind::S2).expect("filtered")).map_err(stage("preprocess-s2"))?;
            let composite = s2_median_composite(&stack, &channels).map_err(stage("preprocess-s2"))?;
            let scaled = robust_minmax(&composite, q);
            let path = out.join(format!("tile_{}_s2composite.tif", t.tile_id));
            write_tiff_file(&path, &scaled).map_err(stage("preprocess-s2"))?;
            Ok(path)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let manifest = PreprocessManifest::new(InputScale::LinearSigma0, channels, q);
    let outputs = file_names(&written);
    ctx.write_manifest("preprocess-s2", None, json!({"dir": dir, "preprocess": manifest}), outputs.clone())?;
    Ok(json!({"tiles": written.len(), "outputs": outputs}))
}

type Loaded = (TileRecord, BTreeMap<Structure, BinaryMask>);

/// ALS raster and decoded masks of every tile that has an ALS raster.
fn load_labeled(ctx: &Context, dir: &Path) -> Result<Vec<Loaded>, CliError> {
    require_dir(dir)?;
    let outcome = scan_dataset(dir, &ctx.scan_options(MaskMode::Strict)).map_err(stage("load"))?;
    if outcome.error_count() > 0 {
        let first = outcome.errors().next().expect("nonzero count");
        return Err(CliError::StageFailure { stage: "load", message: format!("{}: {}", first.path, first.message) });
    }
    let mut tiles = Vec::new();
    for record in outcome.records {
        let Some(als) = record.get(ModalityKind::Als) else { continue };
        let mut masks = BTreeMap::new();
        for class in Structure::ALL {
            let mask = match record.get(ModalityKind::Mask(class)) {
                Some(r) => mask_decode(r, MaskMode::Strict).map_err(stage("load"))?,
                None => BinaryMask::new(als.width(), als.height()).expect("nonempty"),
            };
            masks.insert(class, mask);
        }
        tiles.push((record, masks));
    }
    if tiles.is_empty() {
        return Err(CliError::InputMissing(format!("no ALS tiles in {}", dir.display())));
    }
    Ok(tiles)
}

fn labeled_tiles(tiles: &[Loaded]) -> Vec<LabeledTile> {
    tiles
        .iter()
        .map(|(r, masks)| {
            let m = &masks[&Structure::Aguada];
            let mut t = LabeledTile::new(r.tile_id, m.width(), m.height());
            for (&c, mask) in masks {
                t.set_mask(c, mask.clone()).expect("masks share the ALS grid");
            }
            t
        })
        .collect()
}

fn cmd_synth(
    ctx: &Context,
    dir: &Path,
    class: Option<Structure>,
    style: Option<CropStyle>,
    count: Option<usize>,
    instances: Option<usize>,
    id_offset: u64,
) -> Result<Value, CliError> {
    let section = ctx.config.synth.as_ref();
    let class = class
        .or(section.map(|s| s.class))
        .ok_or_else(|| CliError::ConfigInvalid("synth needs --class".into()))?;
    let style = style.or(section.map(|s| s.style)).unwrap_or(CropStyle::RectangularCropped);
    let count = count.or(section.map(|s| s.count)).unwrap_or(10);
    let instances = instances.or(section.map(|s| s.instances_per_sample)).unwrap_or(1);
    let seed = ctx.seed()?;
    let tiles = load_labeled(ctx, dir)?;
    let to_source = |(r, masks): &Loaded| SourceTile {
        id: r.tile_id,
        image: r.get(ModalityKind::Als).expect("loaded").clone(),
        mask: masks[&class].clone(),
    };
    let backgrounds: Vec<SourceTile> =
        tiles.iter().filter(|(_, m)| m.values().all(BinaryMask::is_clear)).map(to_source).collect();
    let donors: Vec<SourceTile> = tiles.iter().filter(|(_, m)| !m[&class].is_clear()).map(to_source).collect();
    let config = SynthConfig { class, style, count, seed, instances_per_sample: instances };
    let (samples, manifest) =
        generate_dataset(&backgrounds, &donors, &config, ctx.global.jobs).map_err(stage("synth"))?;
    let out = ctx.out()?;
    let pattern = NamingPattern::default();
    let written = samples
        .par_iter()
        .map(|s| {
            let id = id_offset + s.record.index as u64;
            let mut paths = vec![out.join(pattern.file_name(id, &ModalityKind::Als.token()))];
            write_tiff_file(&paths[0], &s.image).map_err(stage("synth"))?;
            for c in Structure::ALL {
                let mask = if c == class { s.mask.clone() } else { BinaryMask::new(s.mask.width(), s.mask.height()).expect("nonempty") };
                let path = out.join(pattern.file_name(id, &ModalityKind::Mask(c).token()));
                write_tiff_file(&path, &mask_encode(&mask)).map_err(stage("synth"))?;
                paths.push(path);
            }
            Ok(paths)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write_json(&out.join("synth.json"), &manifest)?;
    let mut outputs = file_names(&written.concat());
    outputs.push("synth.json".into());
    let cfg = json!({"dir": dir, "synth": config, "id_offset": id_offset, "backgrounds": backgrounds.len(), "donors": donors.len()});
    ctx.write_manifest("synth", Some(seed), cfg, outputs)?;
    Ok(json!({"samples": samples.len(), "backgrounds": backgrounds.len(), "donors": donors.len()}))
}

fn parse_strategy(s: &str) -> Result<Stratification, CliError> {
    let bad = || CliError::ConfigInvalid(format!("bad strategy `{s}`"));
    let parts: Vec<&str> = s.splitn(3, ':').collect();
    match parts.as_slice() {
        ["none"] => Ok(Stratification::Unstratified),
        ["presence", c] => Ok(Stratification::Presence { class: c.parse().map_err(|_| bad())? }),
        ["bins", c] => Ok(Stratification::FractionBins {
            class: c.parse().map_err(|_| bad())?,
            thresholds: DEFAULT_FRACTION_THRESHOLDS.to_vec(),
        }),
        ["bins", c, t] => {
            let thresholds: Vec<f64> = t.split(',').map(|v| v.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
            if thresholds.windows(2).any(|w| w[0] > w[1]) {
                return Err(bad());
            }
            Ok(Stratification::FractionBins { class: c.parse().map_err(|_| bad())?, thresholds })
        }
        _ => Err(bad()),
    }
}

fn cmd_split(ctx: &Context, dir: &Path, k: usize, strategy: &str) -> Result<Value, CliError> {
    let strategy = parse_strategy(strategy)?;
    let seed = ctx.seed()?;
    let tiles = labeled_tiles(&load_labeled(ctx, dir)?);
    let folds = stratified_kfold(&tiles, k, &strategy, seed).map_err(stage("split"))?;
    let out = ctx.out()?;
    write_json(&out.join("folds.json"), &folds)?;
    ctx.write_manifest("split", Some(seed), json!({"dir": dir, "k": k, "strategy": strategy}), vec!["folds.json".into()])?;
    Ok(json!({"tiles": tiles.len(), "k": k, "fold_sizes": folds.fold_sizes()}))
}

fn parse_weights(s: &str) -> Result<SamplerWeights, CliError> {
    if s == "equal" {
        return Ok(SamplerWeights::equal());
    }
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| CliError::ConfigInvalid(format!("bad weights `{s}`"))))
        .collect::<Result<_, _>>()?;
    if v.len() != 4 {
        return Err(CliError::ConfigInvalid("weights need background,aguada,building,platform".into()));
    }
    SamplerWeights::custom(v[0], v[1], v[2], v[3]).map_err(|e| CliError::ConfigInvalid(e.to_string()))
}

fn cmd_sample(
    ctx: &Context,
    dir: &Path,
    n: usize,
    weights: Option<&str>,
    oversample_arg: Option<&str>,
) -> Result<Value, CliError> {
    let weights = match (weights, ctx.config.sampling) {
        (Some(w), _) => parse_weights(w)?,
        (None, Some(w)) => w.validate().map_err(|e| CliError::ConfigInvalid(e.to_string()))?,
        (None, None) => SamplerWeights::equal(),
    };
    let seed = ctx.seed()?;
    let tiles = labeled_tiles(&load_labeled(ctx, dir)?);
    let distribution = measure_distribution(&tiles);
    let draws = weighted_sample(&tiles, &weights, n, seed).map_err(stage("sample"))?;
    let drawn: Vec<Value> = draws.iter().map(|d| json!({"class": d.class, "tile_id": tiles[d.tile].id})).collect();
    let mut report = json!({"distribution": distribution, "weights": weights, "draws": drawn});
    if let Some(spec) = oversample_arg {
        let (c, f) = spec.split_once(':').ok_or_else(|| CliError::ConfigInvalid(format!("bad oversample `{spec}`")))?;
        let class: Structure = c.parse().map_err(|e: crate::UnknownStructure| CliError::ConfigInvalid(e.to_string()))?;
        let factor: usize = f.parse().map_err(|_| CliError::ConfigInvalid(format!("bad factor `{f}`")))?;
        let list = oversample(&tiles, class, factor).map_err(stage("sample"))?;
        report["oversampled"] = json!(list.iter().map(|t| t.id).collect::<Vec<_>>());
    }
    let out = ctx.out()?;
    write_json(&out.join("sample.json"), &report)?;
    let cfg = json!({"dir": dir, "n": n, "weights": weights, "oversample": oversample_arg});
    ctx.write_manifest("sample", Some(seed), cfg, vec!["sample.json".into()])?;
    Ok(json!({"tiles": tiles.len(), "draws": n, "distribution": distribution}))
}

fn cmd_augment(ctx: &Context, dir: &Path) -> Result<Value, CliError> {
    let config = match (&ctx.global.preset, ctx.config.augment) {
        (Some(p), _) => p.parse::<Preset>().map_err(|e| CliError::ConfigInvalid(e.to_string()))?.config(),
        (None, Some(c)) => c,
        (None, None) => Preset::DihedralOnly.config(),
    };
    config.validate().map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    let seed = ctx.seed()?;
    let tiles = load_labeled(ctx, dir)?;
    let out = ctx.out()?;
    let pattern = NamingPattern::default();
    let written = tiles
        .par_iter()
        .enumerate()
        .map(|(i, (record, masks))| {
            let mut rng = item_rng(seed, i as u64);
            let masks: Vec<BinaryMask> = Structure::ALL.iter().map(|c| masks[c].clone()).collect();
            let als = record.get(ModalityKind::Als).expect("loaded");
            let (image, masks) = augment_sample(als, &masks, &config, &mut rng).map_err(stage("augment"))?;
            let id = record.tile_id;
            let mut paths = vec![out.join(pattern.file_name(id, &ModalityKind::Als.token()))];
            write_tiff_file(&paths[0], &image).map_err(stage("augment"))?;
            for (c, m) in Structure::ALL.iter().zip(&masks) {
                let path = out.join(pattern.file_name(id, &ModalityKind::Mask(*c).token()));
                write_tiff_file(&path, &mask_encode(m)).map_err(stage("augment"))?;
                paths.push(path);
            }
            Ok(paths)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let outputs = file_names(&written.concat());
    ctx.write_manifest("augment", Some(seed), json!({"dir": dir, "augment": config}), outputs)?;
    Ok(json!({"tiles": tiles.len()}))
}

fn roster(ctx: &Context, variants: usize) -> Result<(Roster, Option<u64>), CliError> {
    match &ctx.config.roster {
        Some(r) => {
            r.validate().map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
            Ok((r.clone(), ctx.global.seed.or(ctx.config.seed)))
        }
        None => {
            if variants == 0 {
                return Err(CliError::ConfigInvalid("--variants must be at least 1".into()));
            }
            let seed = ctx.seed()?;
            Ok((Roster::heuristic(seed, variants), Some(seed)))
        }
    }
}

fn cmd_predict(ctx: &Context, dir: &Path, variants: usize, tta: bool) -> Result<Value, CliError> {
    let (roster, seed) = roster(ctx, variants)?;
    require_dir(dir)?;
    let outcome = scan_dataset(dir, &ctx.scan_options(MaskMode::Strict)).map_err(stage("predict"))?;
    let tiles: Vec<&TileRecord> = outcome.records.iter().filter(|r| r.get(ModalityKind::Als).is_some()).collect();
    if tiles.is_empty() {
        return Err(CliError::InputMissing(format!("no ALS tiles in {}", dir.display())));
    }
    let out = ctx.out()?;
    let mut written = Vec::new();
    for (name, spec) in &roster.models {
        if matches!(spec, PredictorSpec::File { .. }) {
            continue;
        }
        let classes: Vec<Structure> =
            Structure::ALL.into_iter().filter(|c| roster.members_of(*c).contains(name)).collect();
        if classes.is_empty() {
            continue;
        }
        let predictor = spec.build(name).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        let paths = tiles
            .par_iter()
            .map(|t| {
                // inputs are only the rasters a predictor may read
                let mut inputs = TileRecord::new(t.tile_id);
                for kind in [ModalityKind::Als, ModalityKind::S1, ModalityKind::S2] {
                    if let Some(r) = t.get(kind) {
                        inputs.insert(kind, r.clone()).expect("distinct kinds");
                    }
                }
                let maps = if tta {
                    tta_predict_classes(predictor.as_ref(), &inputs, &classes)
                } else {
                    predictor.predict_classes(&inputs, &classes)
                }
                .map_err(stage("predict"))?;
                let mut paths = Vec::new();
                for (c, map) in classes.iter().zip(maps) {
                    let path = out.join(prob_file_name(t.tile_id, *c, name));
                    write_prob(&path, map)?;
                    paths.push(path);
                }
                Ok(paths)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        written.extend(paths.into_iter().flatten());
    }
    let outputs = file_names(&written);
    ctx.write_manifest("predict", seed, json!({"dir": dir, "roster": roster, "tta": tta}), outputs.clone())?;
    Ok(json!({"tiles": tiles.len(), "models": roster.models.keys().collect::<Vec<_>>(), "maps": outputs.len()}))
}

fn write_prob(path: &Path, map: ProbMap) -> Result<(), CliError> {
    let (w, h) = (map.width(), map.height());
    let raster = Raster::from_f32(w, h, 1, map.into_values()).expect("valid map");
    write_tiff_file(path, &raster).map_err(stage("output"))
}

/// Tile ids for which `tile_<id>_prob_<class>_<model>.tif` exists for some
/// (or, with `model = None`, ensembled `tile_<id>_prob_<class>.tif`) file.
fn prob_tile_ids(dir: &Path, model: Option<&str>) -> Result<Vec<u64>, CliError> {
    let suffix = match model {
        Some(m) => format!("_{}", regex::escape(m)),
        None => String::new(),
    };
    let re = Regex::new(&format!(r"^tile_(\d+)_prob_(aguada|building|platform){suffix}\.tif$")).expect("escaped");
    let mut ids: Vec<u64> = std::fs::read_dir(dir)
        .map_err(|e| CliError::InputMissing(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .filter_map(|e| re.captures(&e.file_name().to_string_lossy()).and_then(|c| c[1].parse().ok()))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

fn cmd_ensemble(ctx: &Context, prob_dir: &Path, vote: &str, variants: usize) -> Result<Value, CliError> {
    require_dir(prob_dir)?;
    let hard = match vote {
        "soft" => false,
        "hard" => true,
        other => return Err(CliError::ConfigInvalid(format!("unknown vote `{other}`"))),
    };
    let (roster, seed) = roster(ctx, variants)?;
    let mut ids = Vec::new();
    for name in roster.models.keys() {
        ids.extend(prob_tile_ids(prob_dir, Some(name))?);
    }
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(CliError::InputMissing(format!("no member probability maps in {}", prob_dir.display())));
    }
    let out = ctx.out()?;
    let member_dir = |name: &str| match &roster.models[name] {
        PredictorSpec::File { dir } => dir.clone(),
        _ => prob_dir.to_path_buf(),
    };
    let written = ids
        .par_iter()
        .map(|&id| {
            let mut paths = Vec::new();
            for class in Structure::ALL {
                let maps = roster
                    .members_of(class)
                    .iter()
                    .map(|m| {
                        let path = member_dir(m).join(prob_file_name(id, class, m));
                        if !path.is_file() {
                            return Err(CliError::InputMissing(format!("{}", path.display())));
                        }
                        read_prob_map(&path).map_err(stage("ensemble"))
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                if hard {
                    let t = ProbabilityThreshold::from_fraction(0.5);
                    let masks: Vec<BinaryMask> = maps.iter().map(|m| binarize(m, t)).collect();
                    let mask = hard_vote(&masks).map_err(stage("ensemble"))?;
                    let path = out.join(mask_file_name(id, class));
                    write_tiff_file(&path, &mask_encode(&mask)).map_err(stage("ensemble"))?;
                    paths.push(path);
                } else {
                    let mean = soft_vote(&maps).map_err(stage("ensemble"))?;
                    let path = out.join(format!("tile_{id}_prob_{class}.tif"));
                    write_prob(&path, mean)?;
                    paths.push(path);
                }
            }
            Ok(paths)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let outputs = file_names(&written.concat());
    ctx.write_manifest("ensemble", seed, json!({"prob_dir": prob_dir, "vote": vote, "roster": roster}), outputs)?;
    Ok(json!({"tiles": ids.len(), "vote": vote}))
}

fn cmd_postprocess(ctx: &Context, prob_dir: &Path) -> Result<Value, CliError> {
    require_dir(prob_dir)?;
    let config: ClassPostprocessConfig = ctx.config.postprocess.clone().unwrap_or_default();
    for (c, cfg) in &config {
        if !(0.0..=1.0).contains(&cfg.probability_threshold) {
            return Err(CliError::ConfigInvalid(format!("{c}: probability threshold outside [0, 1]")));
        }
    }
    let ids = prob_tile_ids(prob_dir, None)?;
    if ids.is_empty() {
        return Err(CliError::InputMissing(format!("no ensembled probability maps in {}", prob_dir.display())));
    }
    let out = ctx.out()?;
    let written = ids
        .par_iter()
        .map(|&id| {
            let mut paths = Vec::new();
            for class in Structure::ALL {
                let path = prob_dir.join(format!("tile_{id}_prob_{class}.tif"));
                if !path.is_file() {
                    return Err(CliError::InputMissing(format!("{}", path.display())));
                }
                let prob = read_prob_map(&path).map_err(stage("postprocess"))?;
                let mask = postprocess_pipeline(&prob, &config.get(&class).copied().unwrap_or_default());
                let target = out.join(mask_file_name(id, class));
                write_tiff_file(&target, &mask_encode(&mask)).map_err(stage("postprocess"))?;
                paths.push(target);
            }
            Ok(paths)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let resolved: BTreeMap<Structure, _> =
        Structure::ALL.into_iter().map(|c| (c, config.get(&c).copied().unwrap_or_default())).collect();
    let outputs = file_names(&written.concat());
    ctx.write_manifest("postprocess", None, json!({"prob_dir": prob_dir, "postprocess": resolved}), outputs)?;
    Ok(json!({"tiles": ids.len()}))
}

fn cmd_score(ctx: &Context, pred_dir: &Path, truth_dir: &Path, name: &str) -> Result<Value, CliError> {
    require_dir(pred_dir)?;
    require_dir(truth_dir)?;
    let report = score_submission(pred_dir, truth_dir).map_err(|e| match e {
        crate::evaluate::EvalError::MissingPrediction(p) => CliError::InputMissing(p.display().to_string()),
        other => stage("score")(other),
    })?;
    let summary = json!({"tiles": report.tiles, "per_class": report.per_class, "overall": report.overall});
    if ctx.global.out.is_some() {
        let out = ctx.out()?;
        write_json(&out.join("score.json"), &report)?;
        let score = crate::evaluate::DatasetScore { per_class: report.per_class.clone(), overall: report.overall };
        let rows = leaderboard(&[LeaderboardEntry::from_score(name, &score)]);
        std::fs::write(out.join("score.csv"), leaderboard_csv(&rows)).map_err(stage("output"))?;
        let cfg = json!({"pred_dir": pred_dir, "truth_dir": truth_dir, "name": name});
        ctx.write_manifest("score", None, cfg, vec!["score.json".into(), "score.csv".into()])?;
    }
    Ok(summary)
}

fn cmd_leaderboard(ctx: &Context, entries: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(entries)
        .map_err(|e| CliError::InputMissing(format!("{}: {e}", entries.display())))?;
    let entries_list: Vec<LeaderboardEntry> =
        serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", entries.display())))?;
    if entries_list.is_empty() {
        return Err(CliError::ConfigInvalid("no leaderboard entries".into()));
    }
    let rows = leaderboard(&entries_list);
    if ctx.global.out.is_some() {
        let out = ctx.out()?;
        std::fs::write(out.join("leaderboard.csv"), leaderboard_csv(&rows)).map_err(stage("output"))?;
        write_json(&out.join("leaderboard.json"), &rows)?;
        let outputs = vec!["leaderboard.csv".into(), "leaderboard.json".into()];
        ctx.write_manifest("leaderboard", None, json!({"entries": entries_list}), outputs)?;
    }
    Ok(json!({"rows": rows}))
}

fn cmd_fixtures(ctx: &Context, tiles: usize, raw_s1: bool) -> Result<Value, CliError> {
    let seed = ctx.seed()?;
    let config = FixtureConfig { tiles, seed, geometry: ctx.geometry, raw_s1 };
    let fixtures = generate_fixtures(&config).map_err(stage("fixtures"))?;
    let out = ctx.out()?;
    let written = write_fixtures(out, &fixtures).map_err(stage("fixtures"))?;
    let outputs: Vec<String> = written
        .iter()
        .map(|p| p.strip_prefix(out).unwrap_or(p).to_string_lossy().into_owned())
        .collect();
    let labeled = fixtures.iter().filter(|t| t.masks.values().any(|m| !m.is_clear())).count();
    ctx.write_manifest("fixtures", Some(seed), json!({"fixtures": config}), outputs.clone())?;
    Ok(json!({"tiles": tiles, "labeled": labeled, "files": outputs.len()}))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_parsing() {
        assert_eq!(parse_strategy("none").unwrap(), Stratification::Unstratified);
        assert_eq!(
            parse_strategy("presence:building").unwrap(),
            Stratification::Presence { class: Structure::Building }
        );
        assert_eq!(
            parse_strategy("bins:aguada:0,0.05,0.15").unwrap(),
            Stratification::FractionBins { class: Structure::Aguada, thresholds: vec![0.0, 0.05, 0.15] }
        );
        assert!(parse_strategy("bins:aguada:0.2,0.1").is_err());
        assert!(parse_strategy("stripes").is_err());
    }

    #[test]
    fn raw_s1_names() {
        assert_eq!(
            parse_raw_s1_name("tile_12_s1raw_vh_desc_2019_3.tif"),
            Some((12, Polarization::Vh, Orbit::Descending, 2019))
        );
        assert_eq!(parse_raw_s1_name("tile_12_s1.tif"), None);
    }

    #[test]
    fn channel_and_weight_parsing() {
        assert_eq!(parse_channels("b02, B8A").unwrap(), vec![S2Band::B02, S2Band::B8A]);
        assert!(parse_channels("CloudMask").is_err());
        assert_eq!(parse_weights("equal").unwrap(), SamplerWeights::equal());
        assert!(parse_weights("1,2").is_err());
    }

    #[test]
    fn usage_errors_are_json() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(["mayakit", "frobnicate"], &mut out, &mut err);
        assert_eq!(code, 2);
        let v: Value = serde_json::from_slice(&err).unwrap();
        assert_eq!(v["error"], "ConfigInvalid");
    }
}
