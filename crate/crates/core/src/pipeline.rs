//! Candidate chain of the detection pipeline (gate, expand, clip, crop) and
//! the serialized run record.
//!
//! Backends and orchestration live in the std companion crate; everything
//! here is pure.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    aspect_gate, clip_to_image, crop_region, expand_baseline, expand_occlusion_aware, BBox, ExpansionConfig,
    GeometryError, PixelRect,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    /// Fixed three-sided expansion regardless of occlusion.
    BaselineEq1,
    /// Aspect-gated expansion.
    #[default]
    OcclusionAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    pub expansion: ExpansionConfig,
    pub detector_score_floor: f64,
    pub classifier_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: PipelineMode::OcclusionAware,
            expansion: ExpansionConfig::default(),
            detector_score_floor: 0.5,
            classifier_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0} must lie in [0, 1]")]
    ThresholdOutOfRange(&'static str),
    #[error(transparent)]
    Expansion(#[from] GeometryError),
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.expansion.validate()?;
        if !(0.0..=1.0).contains(&self.detector_score_floor) {
            return Err(ConfigError::ThresholdOutOfRange("detector_score_floor"));
        }
        if !(0.0..=1.0).contains(&self.classifier_threshold) {
            return Err(ConfigError::ThresholdOutOfRange("classifier_threshold"));
        }
        Ok(())
    }

    pub fn expand(&self, b: BBox) -> BBox {
        match self.mode {
            PipelineMode::BaselineEq1 => expand_baseline(b),
            PipelineMode::OcclusionAware => expand_occlusion_aware(b, &self.expansion),
        }
    }
}

/// Person candidate from a detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierLabel {
    EscooterRider,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Classification {
    pub label: ClassifierLabel,
    pub score: f64,
}

impl Classification {
    pub fn is_rider(&self, threshold: f64) -> bool {
        self.label == ClassifierLabel::EscooterRider && self.score >= threshold
    }
}

/// Geometry of one candidate before classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePlan {
    pub gated: bool,
    pub expanded: BBox,
    pub clipped: Result<BBox, GeometryError>,
    pub crop: Result<PixelRect, GeometryError>,
}

/// Gate, expand according to the mode, clip to the image and round to a
/// crop region.
pub fn plan_candidate(det: &Detection, cfg: &PipelineConfig, width: u32, height: u32) -> CandidatePlan {
    let gated = aspect_gate(det.bbox, &cfg.expansion);
    let expanded = cfg.expand(det.bbox);
    let clipped = clip_to_image(expanded, width as f64, height as f64);
    let crop = clipped.and_then(|c| crop_region(&c, width, height));
    CandidatePlan {
        gated,
        expanded,
        clipped,
        crop,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendDescriptor {
    pub name: String,
    pub version: String,
    pub max_concurrent_sessions: u32,
}

/// Full chain for one candidate at or above the score floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRecord {
    /// Index in the detector's output for the image.
    pub index: u32,
    pub bbox: BBox,
    pub score: f64,
    pub gated: bool,
    pub expanded: BBox,
    pub clipped: Option<BBox>,
    pub crop: Option<PixelRect>,
    pub classification: Option<Classification>,
    pub is_rider: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    BackendFailure,
    ImageUnreadable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageFailure {
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub candidates: Vec<CandidateRecord>,
    pub discarded_below_floor: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ImageFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineRun {
    pub toolkit_version: String,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub manifest_digest: String,
    pub detector: BackendDescriptor,
    pub classifier: BackendDescriptor,
    /// Sorted by image id.
    pub images: Vec<ImageRecord>,
    pub failed_images: Vec<String>,
}
