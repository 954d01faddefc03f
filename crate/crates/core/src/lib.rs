//! Toolkit for segmenting archaeological structures (aguadas, buildings,
//! platforms) in lidar and satellite tiles.
//!
//! The crate covers everything around the neural networks: raster tile I/O,
//! Sentinel-1/2 preprocessing, copy-paste training-data synthesis, sampling
//! and fold splitting, augmentation, test-time-augmented ensembling over
//! pluggable predictors, mask post-processing and IoU scoring.

pub mod augment;
pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod evaluate;
pub mod fixtures;
mod grid;
pub mod manifest;
pub mod mask;
pub mod postprocess;
pub mod preprocess;
pub mod raster;
pub mod rng;
pub mod synthgen;
mod structure;

pub use mask::{BinaryMask, GridError, ProbMap};
pub use raster::{ModalityKind, Raster, RasterError, SampleType, Samples, TileRecord};
pub use structure::{Structure, UnknownStructure};
