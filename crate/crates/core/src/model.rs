//! Benchmark domain types and manifest validation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{bin_of, Keypoint, OcclusionBin};
use crate::geometry::{clip_to_image, BBox};
use crate::synthesis::Placement;

/// Current manifest schema version.
pub const MANIFEST_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    EscooterRider,
    OtherVru,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::EscooterRider, ClassLabel::OtherVru];

    pub fn is_rider(self) -> bool {
        self == ClassLabel::EscooterRider
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::EscooterRider => "escooter_rider",
            ClassLabel::OtherVru => "other_vru",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRef {
    pub path: String,
    pub width: u32,
    pub height: u32,
}

/// Where a synthesized instance came from, enough to rebuild it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisRecord {
    pub base_id: String,
    pub occluder_id: Option<String>,
    pub placement: Option<Placement>,
    pub seed: u64,
    pub target_bin: u8,
    pub policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthInstance {
    pub id: String,
    pub image: ImageRef,
    pub bbox: BBox,
    pub label: ClassLabel,
    #[serde(default)]
    pub keypoints: Vec<Keypoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    pub occlusion_pct: f64,
    pub occlusion_bin: u8,
    #[serde(default)]
    pub provenance: String,
    /// Occlusion level was verified by hand; recomputation must not
    /// overwrite it.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub manual_override: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisRecord>,
}

impl GroundTruthInstance {
    /// The validated decile bin.
    pub fn bin(&self) -> Option<OcclusionBin> {
        OcclusionBin::new(self.occlusion_bin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: String,
    /// Tool and configuration that wrote the document, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    pub instances: Vec<GroundTruthInstance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub toolkit_version: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifestError {
    #[error("malformed manifest: {0}")]
    MalformedDocument(String),
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
    #[error("instance `{id}`: stored bin {stored} but occlusion {pct}% falls in bin {expected}")]
    BinMismatch {
        id: String,
        stored: u8,
        expected: u8,
        pct: f64,
    },
    #[error("instance `{id}`: occlusion {pct}% outside [0, 100)")]
    OutOfRangeOcclusion { id: String, pct: f64 },
    #[error("instance `{id}`: {reason}")]
    InvalidInstance { id: String, reason: String },
}

impl DatasetManifest {
    pub fn new(instances: Vec<GroundTruthInstance>) -> Self {
        Self {
            version: String::from(MANIFEST_VERSION),
            generator: None,
            instances,
        }
    }

    /// Enforces every instance and manifest invariant.
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.version.is_empty() {
            return Err(ManifestError::MalformedDocument("empty version".into()));
        }
        let mut ids = BTreeSet::new();
        let mut dims: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
        for inst in &self.instances {
            let invalid = |reason: &str| ManifestError::InvalidInstance {
                id: inst.id.clone(),
                reason: reason.into(),
            };
            if inst.id.is_empty() {
                return Err(ManifestError::MalformedDocument("empty instance id".into()));
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(ManifestError::DuplicateId(inst.id.clone()));
            }
            let img = &inst.image;
            if img.path.is_empty() || img.width == 0 || img.height == 0 {
                return Err(invalid("image must declare a path and non-zero dimensions"));
            }
            if let Some(prev) = dims.insert(img.path.as_str(), (img.width, img.height)) {
                if prev != (img.width, img.height) {
                    return Err(invalid("image declared with conflicting dimensions"));
                }
            }
            clip_to_image(inst.bbox, img.width as f64, img.height as f64)
                .map_err(|_| invalid("bbox does not overlap the image"))?;
            for k in inst.keypoints.iter().filter(|k| k.is_labeled()) {
                if k.x < 0.0 || k.y < 0.0 || k.x > img.width as f64 || k.y > img.height as f64 {
                    return Err(invalid("labeled keypoint outside the image"));
                }
            }
            let pct = inst.occlusion_pct;
            let bin = bin_of(pct).map_err(|_| ManifestError::OutOfRangeOcclusion {
                id: inst.id.clone(),
                pct,
            })?;
            if bin.index() != inst.occlusion_bin as usize {
                return Err(ManifestError::BinMismatch {
                    id: inst.id.clone(),
                    stored: inst.occlusion_bin,
                    expected: bin.index() as u8,
                    pct,
                });
            }
        }
        Ok(())
    }

    /// Distinct images in id order with the instances that live in them.
    pub fn images(&self) -> BTreeMap<&str, (&ImageRef, Vec<&GroundTruthInstance>)> {
        let mut out: BTreeMap<&str, (&ImageRef, Vec<&GroundTruthInstance>)> = BTreeMap::new();
        for inst in &self.instances {
            out.entry(inst.image.path.as_str())
                .or_insert_with(|| (&inst.image, Vec::new()))
                .1
                .push(inst);
        }
        out
    }
}

/// Instance counts per occlusion bin and class.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ManifestStats {
    /// `per_bin[bin] = [escooter_rider, other_vru]`.
    pub per_bin: [[u64; 2]; 10],
    pub total: u64,
}

impl ManifestStats {
    pub fn count(&self, bin: OcclusionBin, label: ClassLabel) -> u64 {
        self.per_bin[bin.index()][label.index()]
    }

    pub fn class_total(&self, label: ClassLabel) -> u64 {
        self.per_bin.iter().map(|row| row[label.index()]).sum()
    }

    pub fn bin_total(&self, bin: OcclusionBin) -> u64 {
        self.per_bin[bin.index()].iter().sum()
    }
}

/// Counts of a validated manifest; instances with an out-of-range bin are
/// not counted.
pub fn manifest_stats(m: &DatasetManifest) -> ManifestStats {
    let mut stats = ManifestStats::default();
    for inst in &m.instances {
        if let Some(bin) = inst.bin() {
            stats.per_bin[bin.index()][inst.label.index()] += 1;
            stats.total += 1;
        }
    }
    stats
}

/// Binary confusion counts for the rider class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn correct(&self) -> u64 {
        self.tp + self.tn
    }
}

impl core::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: Self) -> Self {
        ConfusionCounts::new(self.tp + o.tp, self.tn + o.tn, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl core::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
