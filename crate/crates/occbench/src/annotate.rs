//! Recomputes stored occlusion levels and reports drift.

use std::path::Path;

use serde::{Deserialize, Serialize};

use occbench_core::annotation::{bin_of, infer_part_visibility, occlusion_level, PartWeightTable, VisibilityMode};
use occbench_core::model::{DatasetManifest, GroundTruthInstance};
use occbench_core::synthesis::AnnotationContext;

use crate::error::{Result, ToolError};
use crate::manifest_io::resolve;
use crate::pixels::read_instance_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Consistent,
    Drift,
    /// Recomputed level is not a valid occlusion percentage (for example a
    /// fully hidden instance); the stored value is kept.
    OutOfRange,
    ManualOverride,
    /// Neither keypoints nor a mask are available.
    NoInputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub id: String,
    pub stored_pct: f64,
    pub recomputed_pct: Option<f64>,
    pub gap_pp: Option<f64>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub toolkit_version: String,
    pub config_hash: String,
    pub weights: PartWeightTable,
    pub mode: VisibilityMode,
    pub drift_threshold_pp: f64,
    pub checked: usize,
    pub flagged: usize,
    pub rows: Vec<AnnotationRow>,
}

fn recompute(inst: &GroundTruthInstance, base_dir: &Path, ctx: &AnnotationContext) -> Result<Option<f64>> {
    if let Some(mask) = &inst.mask_path {
        let path = resolve(base_dir, mask);
        let map = read_instance_map(&path).map_err(|e| ToolError::validation("mask_unreadable", e))?;
        if (map.width(), map.height()) != (inst.image.width, inst.image.height) {
            return Err(ToolError::validation(
                "mask_unreadable",
                format!("mask of `{}` does not match the image size", inst.id),
            ));
        }
        return Ok(Some(ctx.occlusion_of(&map, &inst.keypoints)?));
    }
    if inst.keypoints.is_empty() {
        return Ok(None);
    }
    let mut parts = infer_part_visibility(&inst.keypoints, &ctx.skeleton, None)?;
    ctx.mode.apply(&mut parts);
    Ok(Some(occlusion_level(&parts, &ctx.weights)?))
}

/// Recomputes every instance not marked `manual_override`, returning the
/// updated manifest and one report row per instance.
pub fn annotate_manifest(
    manifest: &DatasetManifest,
    base_dir: &Path,
    ctx: &AnnotationContext,
    drift_threshold_pp: f64,
) -> Result<(DatasetManifest, Vec<AnnotationRow>)> {
    let mut out = manifest.clone();
    let mut rows = Vec::with_capacity(out.instances.len());
    for inst in &mut out.instances {
        let stored = inst.occlusion_pct;
        let mut row = AnnotationRow {
            id: inst.id.clone(),
            stored_pct: stored,
            recomputed_pct: None,
            gap_pp: None,
            status: RowStatus::Consistent,
        };
        if inst.manual_override {
            row.status = RowStatus::ManualOverride;
            rows.push(row);
            continue;
        }
        let Some(pct) = recompute(inst, base_dir, ctx)? else {
            row.status = RowStatus::NoInputs;
            rows.push(row);
            continue;
        };
        let gap = (pct - stored).abs();
        row.recomputed_pct = Some(pct);
        row.gap_pp = Some(gap);
        match bin_of(pct) {
            Ok(bin) => {
                inst.occlusion_pct = pct;
                inst.occlusion_bin = bin.index() as u8;
                if gap > drift_threshold_pp {
                    row.status = RowStatus::Drift;
                }
            }
            Err(_) => row.status = RowStatus::OutOfRange,
        }
        rows.push(row);
    }
    Ok((out, rows))
}

pub fn is_flagged(row: &AnnotationRow) -> bool {
    matches!(row.status, RowStatus::Drift | RowStatus::OutOfRange)
}
