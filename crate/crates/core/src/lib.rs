//! Core algorithms for benchmarking partially occluded e-scooter-rider
//! detection: box expansion, part-weighted occlusion annotation, occlusion
//! synthesis, the candidate chain and per-occlusion-bin evaluation.
//!
//! The crate is `no_std` and only needs an allocator. File formats, backends
//! and the command line live in the `occbench` crate.

#![no_std]

extern crate alloc;

pub mod annotation;
pub mod evaluation;
pub mod geometry;
pub mod model;
pub mod pipeline;
pub mod raster;
pub mod synthesis;

pub use annotation::{bin_of, occlusion_level, OcclusionBin, PartId, PartWeightTable, Skeleton};
pub use evaluation::{accuracy, compare_runs, fp_count_by_run, match_predictions, Accuracy, BinMetricsTable};
pub use geometry::{aspect_gate, clip_to_image, expand_baseline, expand_occlusion_aware, iou, BBox, ExpansionConfig};
pub use model::{ClassLabel, ConfusionCounts, DatasetManifest, GroundTruthInstance};
pub use pipeline::{PipelineConfig, PipelineMode, PipelineRun};

/// Version string embedded in every output.
pub const TOOLKIT_VERSION: &str = concat!("occbench ", env!("CARGO_PKG_VERSION"));
