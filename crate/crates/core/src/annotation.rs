//! Objective occlusion level from semantic-part visibility.
//!
//! An instance's occlusion level is the weighted sum of per-part occluded
//! fractions, with part weights taken from a rule-of-nines style table that
//! sums to 100. Part visibility comes either from keypoint flags (optionally
//! confirmed against the instance mask) or from a part-labelled instance map.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Grid, InstanceMap, MaskCell};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotationError {
    #[error("skeleton expects {expected} keypoints, got {found}")]
    SkeletonMismatch { expected: usize, found: usize },
    #[error("no visibility entry for part {0}")]
    MissingPart(PartId),
    #[error("part {0} listed more than once")]
    DuplicatePart(PartId),
    #[error("invalid weight table: {0}")]
    WeightTableInvalid(String),
    #[error("occlusion percentage {0} outside [0, 100)")]
    OutOfRange(f64),
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(&'static str),
}

/// Keypoint visibility flag, serialized with the COCO numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    NotLabeled,
    LabeledOccluded,
    LabeledVisible,
}

impl Visibility {
    pub fn code(self) -> u8 {
        match self {
            Visibility::NotLabeled => 0,
            Visibility::LabeledOccluded => 1,
            Visibility::LabeledVisible => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Visibility::NotLabeled),
            1 => Some(Visibility::LabeledOccluded),
            2 => Some(Visibility::LabeledVisible),
            _ => None,
        }
    }
}

/// Serialized as `[x, y, v]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub v: Visibility,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, v: Visibility) -> Self {
        Self { x, y, v }
    }

    pub fn is_labeled(&self) -> bool {
        self.v != Visibility::NotLabeled
    }

    /// Pixel containing the keypoint.
    pub fn pixel(&self) -> (i64, i64) {
        (libm::floor(self.x) as i64, libm::floor(self.y) as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("keypoint must be three finite numbers with v in {{0, 1, 2}}")]
pub struct InvalidKeypoint;

impl TryFrom<[f64; 3]> for Keypoint {
    type Error = InvalidKeypoint;

    fn try_from(v: [f64; 3]) -> Result<Self, Self::Error> {
        if !v[0].is_finite() || !v[1].is_finite() || libm::trunc(v[2]) != v[2] || !(0.0..=2.0).contains(&v[2]) {
            return Err(InvalidKeypoint);
        }
        let vis = Visibility::from_code(v[2] as u8).ok_or(InvalidKeypoint)?;
        Ok(Keypoint::new(v[0], v[1], vis))
    }
}

impl From<Keypoint> for [f64; 3] {
    fn from(k: Keypoint) -> Self {
        [k.x, k.y, k.v.code() as f64]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartId {
    Head,
    Torso,
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
}

impl PartId {
    pub const ALL: [PartId; 6] = [
        PartId::Head,
        PartId::Torso,
        PartId::LeftArm,
        PartId::RightArm,
        PartId::LeftLeg,
        PartId::RightLeg,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<PartId> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PartId::Head => "head",
            PartId::Torso => "torso",
            PartId::LeftArm => "left_arm",
            PartId::RightArm => "right_arm",
            PartId::LeftLeg => "left_leg",
            PartId::RightLeg => "right_leg",
        }
    }

    pub fn from_name(name: &str) -> Option<PartId> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticPart {
    pub id: PartId,
    pub keypoint_indices: Vec<usize>,
}

/// Keypoint layout mapped onto the six semantic parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    keypoint_count: usize,
    parts: Vec<SemanticPart>,
}

impl Skeleton {
    /// Every part appears once; keypoint index sets are disjoint and cover
    /// `0..keypoint_count`.
    pub fn new(keypoint_count: usize, parts: Vec<SemanticPart>) -> Result<Self, AnnotationError> {
        let mut seen_parts = [false; 6];
        let mut seen_kp = vec![false; keypoint_count];
        for part in &parts {
            if core::mem::replace(&mut seen_parts[part.id.index()], true) {
                return Err(AnnotationError::DuplicatePart(part.id));
            }
            for &k in &part.keypoint_indices {
                let slot = seen_kp
                    .get_mut(k)
                    .ok_or(AnnotationError::InvalidSkeleton("keypoint index out of range"))?;
                if core::mem::replace(slot, true) {
                    return Err(AnnotationError::InvalidSkeleton("keypoint assigned to two parts"));
                }
            }
        }
        if let Some(i) = seen_parts.iter().position(|s| !s) {
            return Err(AnnotationError::MissingPart(PartId::ALL[i]));
        }
        if seen_kp.iter().any(|s| !s) {
            return Err(AnnotationError::InvalidSkeleton("keypoints not covered by any part"));
        }
        Ok(Self { keypoint_count, parts })
    }

    /// The 17-keypoint COCO person layout:
    ///
    /// | part      | keypoints                                   |
    /// |-----------|---------------------------------------------|
    /// | head      | nose, eyes, ears (0-4)                      |
    /// | torso     | shoulders (5, 6), hips (11, 12)             |
    /// | left arm  | left elbow, left wrist (7, 9)               |
    /// | right arm | right elbow, right wrist (8, 10)            |
    /// | left leg  | left knee, left ankle (13, 15)              |
    /// | right leg | right knee, right ankle (14, 16)            |
    pub fn coco17() -> Self {
        let part = |id, idx: &[usize]| SemanticPart {
            id,
            keypoint_indices: idx.to_vec(),
        };
        Self::new(
            17,
            vec![
                part(PartId::Head, &[0, 1, 2, 3, 4]),
                part(PartId::Torso, &[5, 6, 11, 12]),
                part(PartId::LeftArm, &[7, 9]),
                part(PartId::RightArm, &[8, 10]),
                part(PartId::LeftLeg, &[13, 15]),
                part(PartId::RightLeg, &[14, 16]),
            ],
        )
        .expect("coco17 layout is valid")
    }

    pub fn keypoint_count(&self) -> usize {
        self.keypoint_count
    }

    pub fn parts(&self) -> &[SemanticPart] {
        &self.parts
    }

    /// Part owning keypoint `k`.
    pub fn part_of(&self, k: usize) -> Option<PartId> {
        self.parts
            .iter()
            .find(|p| p.keypoint_indices.contains(&k))
            .map(|p| p.id)
    }
}

/// Percentage weight per semantic part; weights are non-negative and sum
/// to 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct PartWeightTable {
    weights: [f64; 6],
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl PartWeightTable {
    /// Toolkit default: classical rule-of-nines values with the residual 1%
    /// folded into the torso (head 9, torso 37, arms 9, legs 18).
    pub fn toolkit_default() -> Self {
        Self {
            weights: [9.0, 37.0, 9.0, 9.0, 18.0, 18.0],
        }
    }

    pub fn new(weights: [f64; 6]) -> Result<Self, AnnotationError> {
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w < 0.0 {
                return Err(AnnotationError::WeightTableInvalid(alloc::format!(
                    "weight for {} must be a finite non-negative number",
                    PartId::ALL[i]
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 100.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(AnnotationError::WeightTableInvalid(alloc::format!(
                "weights sum to {sum}, expected 100"
            )));
        }
        Ok(Self { weights })
    }

    /// Builds a table from `part name -> weight` entries. All six parts are
    /// required and unknown names are rejected.
    pub fn from_named<'a>(entries: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self, AnnotationError> {
        let mut weights = [f64::NAN; 6];
        for (name, w) in entries {
            let part = PartId::from_name(name)
                .ok_or_else(|| AnnotationError::WeightTableInvalid(alloc::format!("unknown part `{name}`")))?;
            weights[part.index()] = w;
        }
        if let Some(i) = weights.iter().position(|w| w.is_nan()) {
            return Err(AnnotationError::WeightTableInvalid(alloc::format!(
                "missing weight for {}",
                PartId::ALL[i]
            )));
        }
        Self::new(weights)
    }

    pub fn weight(&self, part: PartId) -> f64 {
        self.weights[part.index()]
    }

    pub fn weights(&self) -> [f64; 6] {
        self.weights
    }
}

impl Default for PartWeightTable {
    fn default() -> Self {
        Self::toolkit_default()
    }
}

impl TryFrom<BTreeMap<String, f64>> for PartWeightTable {
    type Error = AnnotationError;

    fn try_from(map: BTreeMap<String, f64>) -> Result<Self, Self::Error> {
        Self::from_named(map.iter().map(|(k, v)| (k.as_str(), *v)))
    }
}

impl From<PartWeightTable> for BTreeMap<String, f64> {
    fn from(t: PartWeightTable) -> Self {
        PartId::ALL
            .iter()
            .map(|p| (p.name().to_string(), t.weight(*p)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartVisibility {
    pub part: PartId,
    pub visible_fraction: f64,
}

/// How per-part visibility is turned into a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityMode {
    /// Keep the visible fraction as measured.
    #[default]
    Fractional,
    /// A part is either visible (fraction >= 0.5) or occluded.
    Binary,
}

impl VisibilityMode {
    pub fn apply(self, parts: &mut [PartVisibility]) {
        if self == VisibilityMode::Binary {
            for p in parts {
                p.visible_fraction = if p.visible_fraction >= 0.5 { 1.0 } else { 0.0 };
            }
        }
    }
}

/// Source of "is the instance visible here" answers for keypoint
/// confirmation.
pub trait MaskProbe {
    fn is_visible_at(&self, x: i64, y: i64) -> bool;
}

impl MaskProbe for InstanceMap {
    fn is_visible_at(&self, x: i64, y: i64) -> bool {
        self.get_signed(x, y).is_some_and(|c| c.is_visible())
    }
}

impl MaskProbe for Grid<bool> {
    fn is_visible_at(&self, x: i64, y: i64) -> bool {
        self.get_signed(x, y).copied().unwrap_or(false)
    }
}

/// A visible keypoint is confirmed when the mask is present anywhere in the
/// 3×3 neighbourhood of its pixel.
fn confirmed_by_mask(k: &Keypoint, mask: &dyn MaskProbe) -> bool {
    let (px, py) = k.pixel();
    (-1..=1).any(|dy| (-1..=1).any(|dx| mask.is_visible_at(px + dx, py + dy)))
}

/// Per-part visible fraction from keypoint flags.
///
/// The fraction is the number of `LabeledVisible` keypoints (each confirmed
/// by the mask when one is given) over the number of labeled keypoints of the
/// part; parts without labeled keypoints get 0.
pub fn infer_part_visibility(
    keypoints: &[Keypoint],
    skeleton: &Skeleton,
    mask: Option<&dyn MaskProbe>,
) -> Result<Vec<PartVisibility>, AnnotationError> {
    if keypoints.len() != skeleton.keypoint_count() {
        return Err(AnnotationError::SkeletonMismatch {
            expected: skeleton.keypoint_count(),
            found: keypoints.len(),
        });
    }
    Ok(skeleton
        .parts()
        .iter()
        .map(|part| {
            let mut labeled = 0usize;
            let mut visible = 0usize;
            for &i in &part.keypoint_indices {
                let k = &keypoints[i];
                if !k.is_labeled() {
                    continue;
                }
                labeled += 1;
                if k.v == Visibility::LabeledVisible && mask.is_none_or(|m| confirmed_by_mask(k, m)) {
                    visible += 1;
                }
            }
            let visible_fraction = if labeled == 0 {
                0.0
            } else {
                visible as f64 / labeled as f64
            };
            PartVisibility {
                part: part.id,
                visible_fraction,
            }
        })
        .collect())
}

/// Per-part visible fraction from a part-labelled instance map: visible
/// cells over all cells of the part. Parts with no cells get 0.
pub fn part_visibility_from_map(map: &InstanceMap) -> Vec<PartVisibility> {
    let mut visible = [0usize; 6];
    let mut total = [0usize; 6];
    for cell in map.as_slice() {
        if let Some(p) = cell.part() {
            total[p.index()] += 1;
            if cell.is_visible() {
                visible[p.index()] += 1;
            }
        }
    }
    PartId::ALL
        .iter()
        .map(|&part| {
            let i = part.index();
            let visible_fraction = if total[i] == 0 {
                0.0
            } else {
                visible[i] as f64 / total[i] as f64
            };
            PartVisibility { part, visible_fraction }
        })
        .collect()
}

/// Weighted occlusion percentage `Σ weight(part) · (1 − visible_fraction)`.
pub fn occlusion_level(parts: &[PartVisibility], weights: &PartWeightTable) -> Result<f64, AnnotationError> {
    let mut fractions = [None; 6];
    for p in parts {
        if !(0.0..=1.0).contains(&p.visible_fraction) {
            return Err(AnnotationError::WeightTableInvalid(alloc::format!(
                "visible fraction {} for {} outside [0, 1]",
                p.visible_fraction,
                p.part
            )));
        }
        if fractions[p.part.index()].replace(p.visible_fraction).is_some() {
            return Err(AnnotationError::DuplicatePart(p.part));
        }
    }
    let mut level = 0.0;
    for part in PartId::ALL {
        let f = fractions[part.index()].ok_or(AnnotationError::MissingPart(part))?;
        level += weights.weight(part) * (1.0 - f);
    }
    Ok(level.clamp(0.0, 100.0))
}

/// Decile occlusion bucket, 0 for 0-9% up to 9 for 90-99%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct OcclusionBin(u8);

impl OcclusionBin {
    pub const COUNT: usize = 10;

    pub fn new(index: u8) -> Option<Self> {
        (index < 10).then_some(Self(index))
    }

    pub fn all() -> impl Iterator<Item = OcclusionBin> {
        (0..10).map(OcclusionBin)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Lower edge of the band in percent.
    pub fn lower(self) -> f64 {
        10.0 * self.0 as f64
    }

    /// Exclusive upper edge of the band in percent.
    pub fn upper(self) -> f64 {
        10.0 * (self.0 as f64 + 1.0)
    }

    pub fn contains(self, pct: f64) -> bool {
        bin_of(pct) == Ok(self)
    }

    /// Axis label such as `"0-9%"` or `"90-99%"`.
    pub fn label(self) -> String {
        alloc::format!("{}-{}%", 10 * self.0, 10 * self.0 + 9)
    }
}

impl TryFrom<u8> for OcclusionBin {
    type Error = AnnotationError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        OcclusionBin::new(v).ok_or(AnnotationError::OutOfRange(v as f64 * 10.0))
    }
}

impl From<OcclusionBin> for u8 {
    fn from(b: OcclusionBin) -> Self {
        b.0
    }
}

impl fmt::Display for OcclusionBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}%", 10 * self.0, 10 * self.0 + 9)
    }
}

/// `floor(pct / 10)` for `0 <= pct < 100`.
pub fn bin_of(pct: f64) -> Result<OcclusionBin, AnnotationError> {
    if !(0.0..100.0).contains(&pct) {
        return Err(AnnotationError::OutOfRange(pct));
    }
    let b = libm::floor(pct / 10.0) as u8;
    Ok(OcclusionBin(b.min(9)))
}

/// Labels every cell of a binary instance mask with the part of its nearest
/// labeled keypoint. Cells stay unlabeled when no keypoint is labeled.
pub fn assign_parts_by_keypoints(mask: &Grid<bool>, keypoints: &[Keypoint], skeleton: &Skeleton) -> InstanceMap {
    let anchors: Vec<(f64, f64, PartId)> = keypoints
        .iter()
        .enumerate()
        .filter(|(_, k)| k.is_labeled())
        .filter_map(|(i, k)| skeleton.part_of(i).map(|p| (k.x, k.y, p)))
        .collect();
    Grid::from_fn(mask.width(), mask.height(), |x, y| {
        if !*mask.get(x, y) {
            return MaskCell::Background;
        }
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        let nearest = anchors
            .iter()
            .map(|&(kx, ky, p)| ((kx - cx) * (kx - cx) + (ky - cy) * (ky - cy), p))
            .fold(None::<(f64, PartId)>, |best, cand| match best {
                Some(b) if b.0 <= cand.0 => Some(b),
                _ => Some(cand),
            });
        MaskCell::Visible(nearest.map(|(_, p)| p))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kps(v: Visibility) -> Vec<Keypoint> {
        (0..17).map(|i| Keypoint::new(i as f64, 1.0, v)).collect()
    }

    fn level(parts: &[PartVisibility]) -> f64 {
        occlusion_level(parts, &PartWeightTable::toolkit_default()).unwrap()
    }

    #[test]
    fn all_visible_and_all_occluded() {
        let sk = Skeleton::coco17();
        let vis = infer_part_visibility(&kps(Visibility::LabeledVisible), &sk, None).unwrap();
        assert!(vis.iter().all(|p| p.visible_fraction == 1.0));
        assert_eq!(level(&vis), 0.0);
        let occ = infer_part_visibility(&kps(Visibility::LabeledOccluded), &sk, None).unwrap();
        assert!(occ.iter().all(|p| p.visible_fraction == 0.0));
        assert_eq!(level(&occ), 100.0);
    }

    #[test]
    fn head_three_of_five() {
        let sk = Skeleton::coco17();
        let mut k = kps(Visibility::LabeledVisible);
        k[3].v = Visibility::LabeledOccluded;
        k[4].v = Visibility::LabeledOccluded;
        let vis = infer_part_visibility(&k, &sk, None).unwrap();
        let head = vis.iter().find(|p| p.part == PartId::Head).unwrap();
        assert!((head.visible_fraction - 0.6).abs() < 1e-15);
    }

    #[test]
    fn unlabeled_keypoints_are_ignored_and_empty_parts_are_zero() {
        let sk = Skeleton::coco17();
        let mut k = kps(Visibility::LabeledVisible);
        k[0].v = Visibility::NotLabeled;
        k[7].v = Visibility::NotLabeled;
        k[9].v = Visibility::NotLabeled;
        let vis = infer_part_visibility(&k, &sk, None).unwrap();
        assert_eq!(vis[PartId::Head.index()].visible_fraction, 1.0);
        assert_eq!(vis[PartId::LeftArm.index()].visible_fraction, 0.0);
    }

    #[test]
    fn skeleton_mismatch() {
        let sk = Skeleton::coco17();
        assert_eq!(
            infer_part_visibility(&kps(Visibility::LabeledVisible)[..16], &sk, None),
            Err(AnnotationError::SkeletonMismatch {
                expected: 17,
                found: 16
            })
        );
    }

    #[test]
    fn mask_demotes_unconfirmed_keypoints_with_one_pixel_tolerance() {
        let sk = Skeleton::coco17();
        let mut mask = Grid::filled(40, 10, false);
        // mask covers x in 0..=10 on every row
        for y in 0..10 {
            for x in 0..=10 {
                mask.set(x, y, true);
            }
        }
        // keypoints sit at x = 0..16; x = 11 is within one pixel, 12+ is not
        let vis = infer_part_visibility(&kps(Visibility::LabeledVisible), &sk, Some(&mask)).unwrap();
        let by = |p: PartId| vis[p.index()].visible_fraction;
        assert_eq!(by(PartId::Head), 1.0);
        assert_eq!(by(PartId::LeftArm), 1.0); // 7, 9
        assert_eq!(by(PartId::RightArm), 1.0); // 8, 10
        assert_eq!(by(PartId::Torso), 0.75); // 5, 6, 11 ok; 12 out
        assert_eq!(by(PartId::LeftLeg), 0.0); // 13, 15
        assert_eq!(by(PartId::RightLeg), 0.0); // 14, 16
    }

    #[test]
    fn only_head_occluded_is_nine() {
        let mut parts: Vec<_> = PartId::ALL
            .iter()
            .map(|&part| PartVisibility {
                part,
                visible_fraction: 1.0,
            })
            .collect();
        parts[PartId::Head.index()].visible_fraction = 0.0;
        assert_eq!(level(&parts), 9.0);
    }

    #[test]
    fn missing_and_duplicate_parts() {
        let full: Vec<_> = PartId::ALL
            .iter()
            .map(|&part| PartVisibility {
                part,
                visible_fraction: 1.0,
            })
            .collect();
        let w = PartWeightTable::toolkit_default();
        assert_eq!(
            occlusion_level(&full[1..], &w),
            Err(AnnotationError::MissingPart(PartId::Head))
        );
        let mut dup = full.clone();
        dup.push(full[2]);
        assert_eq!(
            occlusion_level(&dup, &w),
            Err(AnnotationError::DuplicatePart(PartId::LeftArm))
        );
    }

    #[test]
    fn binary_mode_rounds_parts() {
        let mut parts = [
            PartVisibility {
                part: PartId::Head,
                visible_fraction: 0.6,
            },
            PartVisibility {
                part: PartId::Torso,
                visible_fraction: 0.25,
            },
        ];
        VisibilityMode::Binary.apply(&mut parts);
        assert_eq!(parts[0].visible_fraction, 1.0);
        assert_eq!(parts[1].visible_fraction, 0.0);
    }

    #[test]
    fn weight_table_validation() {
        assert!(PartWeightTable::new([10.0, 30.0, 10.0, 10.0, 20.0, 20.0]).is_ok());
        assert!(PartWeightTable::new([10.0, 30.0, 10.0, 10.0, 20.0, 21.0]).is_err());
        assert!(PartWeightTable::new([-1.0, 41.0, 10.0, 10.0, 20.0, 20.0]).is_err());
        let named = [
            ("head", 9.0),
            ("torso", 37.0),
            ("left_arm", 9.0),
            ("right_arm", 9.0),
            ("left_leg", 18.0),
            ("right_leg", 18.0),
        ];
        assert_eq!(
            PartWeightTable::from_named(named).unwrap(),
            PartWeightTable::toolkit_default()
        );
        assert!(PartWeightTable::from_named(named[..5].iter().copied()).is_err());
        let mut bad = named;
        bad[0].0 = "neck";
        assert!(PartWeightTable::from_named(bad).is_err());
    }

    #[test]
    fn bin_boundaries() {
        let idx = |p| bin_of(p).unwrap().index();
        assert_eq!(idx(0.0), 0);
        assert_eq!(idx(9.99), 0);
        assert_eq!(idx(10.0), 1);
        assert_eq!(idx(95.0), 9);
        assert_eq!(idx(99.999), 9);
        assert!(bin_of(100.0).is_err());
        assert!(bin_of(-0.1).is_err());
        assert!(bin_of(f64::NAN).is_err());
        assert_eq!(OcclusionBin::new(0).unwrap().label(), "0-9%");
        assert_eq!(OcclusionBin::new(9).unwrap().label(), "90-99%");
    }

    #[test]
    fn nearest_keypoint_part_assignment() {
        let sk = Skeleton::coco17();
        let mask = Grid::filled(20, 4, true);
        let mut k = kps(Visibility::NotLabeled);
        k[0] = Keypoint::new(2.0, 2.0, Visibility::LabeledVisible);
        k[15] = Keypoint::new(17.0, 2.0, Visibility::LabeledOccluded);
        let map = assign_parts_by_keypoints(&mask, &k, &sk);
        assert_eq!(*map.get(0, 0), MaskCell::Visible(Some(PartId::Head)));
        assert_eq!(*map.get(19, 3), MaskCell::Visible(Some(PartId::LeftLeg)));
        let none = assign_parts_by_keypoints(&mask, &kps(Visibility::NotLabeled), &sk);
        assert!(!none.has_part_labels());
    }
}
