//! Synthesis plan documents, asset loading and dataset output.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use occbench_core::annotation::Keypoint;
use occbench_core::model::{ClassLabel, DatasetManifest, Generator};
use occbench_core::synthesis::{
    build_manifest, collect_slots, synthesize_slot, uniform_figure, AnnotationContext, BaseInstance, OccluderAsset,
    OccluderCategory, SearchPolicy, SynthesisPlan, SynthesizedInstance,
};
use occbench_core::TOOLKIT_VERSION;

use crate::error::{Result, ToolError};
use crate::manifest_io::{resolve, serialize_manifest, write_output};
use crate::pixels::{read_binary_mask, read_instance_map, read_rgba, write_instance_map, write_rgba};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    /// Rectangle-part figure generated from the weight table.
    UniformFigure {
        id: String,
        label: ClassLabel,
        #[serde(default = "default_unit")]
        unit: u32,
        #[serde(default = "default_margin")]
        margin: u32,
    },
    /// Photograph plus instance mask. A mask holding part labels is used
    /// as is; a binary mask gets parts from the nearest keypoint.
    Image {
        id: String,
        label: ClassLabel,
        image: String,
        mask: String,
        keypoints: Vec<Keypoint>,
    },
}

fn default_unit() -> u32 {
    1
}

fn default_margin() -> u32 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OccluderSpec {
    Rectangle {
        id: String,
        category: OccluderCategory,
        width: u32,
        height: u32,
        color: [u8; 3],
    },
    Ellipse {
        id: String,
        category: OccluderCategory,
        width: u32,
        height: u32,
        color: [u8; 3],
    },
    /// RGBA cutout; alpha is the occluder mask.
    Png {
        id: String,
        category: OccluderCategory,
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub quotas: [u32; 10],
    pub seed: u64,
    #[serde(default)]
    pub policy: SearchPolicy,
    #[serde(default)]
    pub max_attempts: Option<u32>,
    #[serde(default)]
    pub slot_retries: Option<u32>,
    pub bases: Vec<BaseSpec>,
    #[serde(default)]
    pub occluders: Vec<OccluderSpec>,
}

impl PlanDocument {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let doc: PlanDocument = serde_json::from_slice(bytes).map_err(|e| ToolError::validation("plan", e))?;
        if doc.max_attempts == Some(0) {
            return Err(ToolError::validation("plan", "max_attempts must be at least 1"));
        }
        if doc.bases.is_empty() && doc.quotas.iter().any(|&q| q > 0) {
            return Err(ToolError::validation("plan", "quotas need at least one base"));
        }
        Ok(doc)
    }

    pub fn plan(&self) -> SynthesisPlan {
        let mut p = SynthesisPlan::new(self.quotas, self.seed);
        p.policy = self.policy;
        if let Some(a) = self.max_attempts {
            p.max_attempts = a;
        }
        if let Some(r) = self.slot_retries {
            p.slot_retries = r;
        }
        p
    }
}

fn pixel_err(e: impl ToString) -> ToolError {
    ToolError::validation("image_unreadable", e)
}

pub fn load_bases(doc: &PlanDocument, base_dir: &Path, ctx: &AnnotationContext) -> Result<Vec<BaseInstance>> {
    doc.bases
        .iter()
        .map(|b| match b {
            BaseSpec::UniformFigure {
                id,
                label,
                unit,
                margin,
            } => Ok(uniform_figure(id.clone(), *label, &ctx.weights, *unit, *margin)?),
            BaseSpec::Image {
                id,
                label,
                image,
                mask,
                keypoints,
            } => {
                let img = read_rgba(&resolve(base_dir, image)).map_err(pixel_err)?;
                let mask_path = resolve(base_dir, mask);
                let map = read_instance_map(&mask_path).map_err(pixel_err)?;
                if map.has_part_labels() {
                    Ok(BaseInstance::new(id.clone(), *label, img, map, keypoints.clone())?)
                } else {
                    let bin = read_binary_mask(&mask_path).map_err(pixel_err)?;
                    Ok(BaseInstance::from_mask(
                        id.clone(),
                        *label,
                        img,
                        &bin,
                        keypoints.clone(),
                        &ctx.skeleton,
                    )?)
                }
            }
        })
        .collect()
}

pub fn load_occluders(doc: &PlanDocument, base_dir: &Path) -> Result<Vec<OccluderAsset>> {
    doc.occluders
        .iter()
        .map(|o| {
            Ok(match o {
                OccluderSpec::Rectangle {
                    id,
                    category,
                    width,
                    height,
                    color,
                } => OccluderAsset::rectangle(id.clone(), *category, *width, *height, *color)?,
                OccluderSpec::Ellipse {
                    id,
                    category,
                    width,
                    height,
                    color,
                } => OccluderAsset::ellipse(id.clone(), *category, *width, *height, *color)?,
                OccluderSpec::Png { id, category, path } => OccluderAsset::new(
                    id.clone(),
                    *category,
                    read_rgba(&resolve(base_dir, path)).map_err(pixel_err)?,
                )?,
            })
        })
        .collect()
}

/// Builds every slot in parallel; the result does not depend on scheduling.
pub fn synthesize_parallel(
    bases: &[BaseInstance],
    occluders: &[OccluderAsset],
    plan: &SynthesisPlan,
    ctx: &AnnotationContext,
) -> Result<Vec<SynthesizedInstance>> {
    let slots: Vec<_> = plan.slots().collect();
    let results = slots
        .par_iter()
        .map(|&(bin, index)| synthesize_slot(bases, occluders, plan, bin, index, ctx))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(collect_slots(plan, results)?)
}

/// Writes composites, instance maps and `manifest.json` under `out_dir`.
pub fn write_dataset(out_dir: &Path, instances: &[SynthesizedInstance], config_hash: &str) -> Result<DatasetManifest> {
    let mut manifest = build_manifest(instances);
    manifest.generator = Some(Generator {
        toolkit_version: TOOLKIT_VERSION.into(),
        config_hash: config_hash.into(),
    });
    manifest.validate()?;
    instances.par_iter().try_for_each(|inst| -> Result<()> {
        write_rgba(&out_dir.join(inst.image_path()), &inst.composed.image).map_err(ToolError::internal)?;
        write_instance_map(&out_dir.join(inst.mask_path()), &inst.composed.map).map_err(ToolError::internal)?;
        Ok(())
    })?;
    write_output(&out_dir.join("manifest.json"), &serialize_manifest(&manifest))?;
    Ok(manifest)
}

/// Loads the plan at `plan_path`, synthesizes and writes the dataset.
pub fn synthesize_from_plan(
    plan_path: &Path,
    out_dir: &Path,
    ctx: &AnnotationContext,
    config_hash: &str,
) -> Result<DatasetManifest> {
    let doc = PlanDocument::parse(&crate::manifest_io::read_input(plan_path)?)?;
    let base_dir = plan_path.parent().unwrap_or(Path::new(""));
    let bases = load_bases(&doc, base_dir, ctx)?;
    let occluders = load_occluders(&doc, base_dir)?;
    let instances = synthesize_parallel(&bases, &occluders, &doc.plan(), ctx)?;
    write_dataset(out_dir, &instances, config_hash)
}
