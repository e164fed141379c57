//! Runs the candidate chain over a dataset against pluggable backends.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use occbench_core::model::DatasetManifest;
use occbench_core::pipeline::{
    plan_candidate, CandidateRecord, FailureKind, ImageFailure, ImageRecord, PipelineConfig, PipelineRun,
};
use occbench_core::raster::RgbaImage;
use occbench_core::TOOLKIT_VERSION;

use crate::backend::{ClassifierBackend, CropInput, DetectorBackend, ImageInput};
use crate::error::{Result, ToolError};
use crate::manifest_io::{manifest_digest, resolve};
use crate::pixels::{crop, dimensions, read_rgba, write_rgba};

/// Wall-clock time per stage, summed over images. Kept out of the run
/// record so that records stay byte-reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub detect_ms: f64,
    pub crop_ms: f64,
    pub classify_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Clock {
    detect: Duration,
    crop: Duration,
    classify: Duration,
}

impl Clock {
    fn add(self, o: Clock) -> Clock {
        Clock {
            detect: self.detect + o.detect,
            crop: self.crop + o.crop,
            classify: self.classify + o.classify,
        }
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn fail(mut rec: ImageRecord, kind: FailureKind, message: String) -> ImageRecord {
    rec.error = Some(ImageFailure { kind, message });
    rec
}

/// Processes one image: detect, drop candidates below the score floor,
/// expand, clip, crop and classify each remaining candidate.
///
/// Failures are recorded on the returned record rather than returned.
/// `crop_dir` receives crop files when the classifier needs them.
pub fn run_image(
    image: &ImageInput<'_>,
    cfg: &PipelineConfig,
    det: &dyn DetectorBackend,
    cls: &dyn ClassifierBackend,
    crop_dir: Option<&Path>,
) -> ImageRecord {
    run_image_timed(image, cfg, det, cls, crop_dir).0
}

fn run_image_timed(
    image: &ImageInput<'_>,
    cfg: &PipelineConfig,
    det: &dyn DetectorBackend,
    cls: &dyn ClassifierBackend,
    crop_dir: Option<&Path>,
) -> (ImageRecord, Clock) {
    let mut clock = Clock::default();
    let rec = ImageRecord {
        image_id: image.id.to_string(),
        width: image.width,
        height: image.height,
        candidates: Vec::new(),
        discarded_below_floor: 0,
        error: None,
    };
    match dimensions(image.path) {
        Err(e) => return (fail(rec, FailureKind::ImageUnreadable, e.to_string()), clock),
        Ok(d) if d != (image.width, image.height) => {
            let msg = format!(
                "image is {}x{} but the manifest declares {}x{}",
                d.0, d.1, image.width, image.height
            );
            return (fail(rec, FailureKind::ImageUnreadable, msg), clock);
        }
        Ok(_) => {}
    }

    let t = Instant::now();
    let detections = det.detect(image);
    clock.detect += t.elapsed();
    let detections = match detections {
        Ok(d) => d,
        Err(e) => return (fail(rec, FailureKind::BackendFailure, format!("detector: {e}")), clock),
    };

    let mut rec = rec;
    let mut pixels: Option<RgbaImage> = None;
    for (i, d) in detections.iter().enumerate() {
        if d.score < cfg.detector_score_floor {
            rec.discarded_below_floor += 1;
            continue;
        }
        let plan = plan_candidate(d, cfg, image.width, image.height);
        let mut cand = CandidateRecord {
            index: i as u32,
            bbox: d.bbox,
            score: d.score,
            gated: plan.gated,
            expanded: plan.expanded,
            clipped: plan.clipped.ok(),
            crop: plan.crop.ok(),
            classification: None,
            is_rider: false,
            skipped: None,
        };
        let (clipped, region) = match (plan.clipped, plan.crop) {
            (Ok(c), Ok(r)) => (c, r),
            (Err(e), _) | (_, Err(e)) => {
                cand.skipped = Some(e.to_string());
                rec.candidates.push(cand);
                continue;
            }
        };

        let mut crop_file: Option<PathBuf> = None;
        if let Some(dir) = crop_dir.filter(|_| cls.needs_crop_file()) {
            let t = Instant::now();
            if pixels.is_none() {
                match read_rgba(image.path) {
                    Ok(p) => pixels = Some(p),
                    Err(e) => return (fail(rec, FailureKind::ImageUnreadable, e.to_string()), clock),
                }
            }
            let sub = crop(pixels.as_ref().expect("decoded above"), &clipped).expect("crop region already validated");
            let path = dir.join(format!("{}-{i}.png", sanitize(image.id)));
            if let Err(e) = write_rgba(&path, &sub) {
                return (fail(rec, FailureKind::BackendFailure, e.to_string()), clock);
            }
            crop_file = Some(path);
            clock.crop += t.elapsed();
        }

        let t = Instant::now();
        let verdict = cls.classify(&CropInput {
            image_id: image.id,
            candidate_index: i as u32,
            detection: d.bbox,
            crop: region,
            crop_path: crop_file.as_deref(),
        });
        clock.classify += t.elapsed();
        match verdict {
            Ok(c) => {
                cand.is_rider = c.is_rider(cfg.classifier_threshold);
                cand.classification = Some(c);
                rec.candidates.push(cand);
            }
            Err(e) => {
                rec.candidates.push(cand);
                return (
                    fail(rec, FailureKind::BackendFailure, format!("classifier: {e}")),
                    clock,
                );
            }
        }
    }
    (rec, clock)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Everything a dataset run needs besides the manifest.
pub struct RunSetup<'a> {
    pub config: &'a PipelineConfig,
    pub config_hash: &'a str,
    pub detector: &'a dyn DetectorBackend,
    pub classifier: &'a dyn ClassifierBackend,
    pub workers: usize,
}

/// Runs every image of `manifest` (paths resolved against `base_dir`).
/// Images are processed concurrently, bounded by the worker count and the
/// backends' session limits, and recorded in image-id order.
pub fn run_dataset(
    manifest: &DatasetManifest,
    base_dir: &Path,
    setup: &RunSetup<'_>,
) -> Result<(PipelineRun, StageTimings)> {
    setup.config.validate()?;
    let started = Instant::now();
    let det_desc = setup.detector.descriptor();
    let cls_desc = setup.classifier.descriptor();
    let sessions = det_desc
        .max_concurrent_sessions
        .min(cls_desc.max_concurrent_sessions)
        .max(1) as usize;
    let workers = setup.workers.max(1).min(sessions);

    let scratch = if setup.classifier.needs_crop_file() {
        Some(tempfile::tempdir().map_err(|e| ToolError::internal(format!("cannot create crop directory: {e}")))?)
    } else {
        None
    };
    let crop_dir = scratch.as_ref().map(|d| d.path());

    let images: Vec<(String, PathBuf, u32, u32)> = manifest
        .images()
        .into_iter()
        .map(|(id, (r, _))| (id.to_string(), resolve(base_dir, &r.path), r.width, r.height))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(ToolError::internal)?;
    let results: Vec<(ImageRecord, Clock)> = pool.install(|| {
        images
            .par_iter()
            .map(|(id, path, w, h)| {
                let input = ImageInput {
                    id,
                    path,
                    width: *w,
                    height: *h,
                };
                run_image_timed(&input, setup.config, setup.detector, setup.classifier, crop_dir)
            })
            .collect()
    });

    let clock = results.iter().fold(Clock::default(), |acc, (_, c)| acc.add(*c));
    let records: Vec<ImageRecord> = results.into_iter().map(|(r, _)| r).collect();
    let failed_images = records
        .iter()
        .filter(|r| r.error.is_some())
        .map(|r| r.image_id.clone())
        .collect();
    let run = PipelineRun {
        toolkit_version: TOOLKIT_VERSION.into(),
        config: *setup.config,
        config_hash: setup.config_hash.into(),
        manifest_digest: manifest_digest(manifest),
        detector: det_desc,
        classifier: cls_desc,
        images: records,
        failed_images,
    };
    let timings = StageTimings {
        detect_ms: ms(clock.detect),
        crop_ms: ms(clock.crop),
        classify_ms: ms(clock.classify),
        total_ms: ms(started.elapsed()),
    };
    Ok((run, timings))
}
