//! COCO-style matching of classified candidates to ground truth, accuracy
//! and per-occlusion-bin characterization tables.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::OcclusionBin;
use crate::geometry::{iou, BBox};
use crate::model::{ClassLabel, ConfusionCounts, DatasetManifest, GroundTruthInstance};
use crate::pipeline::PipelineRun;

/// Negative-matching convention written into every report.
pub const TN_RULE: &str = "non-rider ground truth that is unmatched or matched to a non-rider verdict counts as TN";
/// False-positive bin attribution written into every report.
pub const FP_BIN_RULE: &str =
    "unmatched rider-verdict candidates count as FP in the bin of the highest-IoU ground truth in the image (ties: nearest centre), bin 0 if the image has none";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("ground truth instance `{0}` has no valid occlusion bin")]
    MissingBin(String),
    #[error("accuracy of empty counts is undefined")]
    EmptyCounts,
    #[error("runs were evaluated on different manifests ({0} vs {1})")]
    ManifestMismatch(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub iou_threshold: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5 }
    }
}

/// A classified person candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub bbox: BBox,
    pub score: f64,
    pub is_rider: bool,
}

/// One-to-one partial matching between ground truth and predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub gt_to_pred: Vec<Option<usize>>,
    pub pred_to_gt: Vec<Option<usize>>,
}

/// Prediction indices by descending score, ties by index.
pub fn score_order(preds: &[Prediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    order
}

/// Greedy COCO matching: predictions in descending score order each take the
/// highest-IoU unmatched ground truth with IoU >= `iou_threshold` (ties go to
/// the lower ground-truth index).
pub fn match_predictions(gt: &[BBox], preds: &[Prediction], iou_threshold: f64) -> MatchResult {
    let mut gt_to_pred = vec![None; gt.len()];
    let mut pred_to_gt = vec![None; preds.len()];
    for p in score_order(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gbox) in gt.iter().enumerate() {
            if gt_to_pred[g].is_some() {
                continue;
            }
            let v = iou(&preds[p].bbox, gbox);
            if v < iou_threshold {
                continue;
            }
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            gt_to_pred[g] = Some(p);
            pred_to_gt[p] = Some(g);
        }
    }
    MatchResult { gt_to_pred, pred_to_gt }
}

/// Ground truth seen by the confusion step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtEntry {
    pub bbox: BBox,
    pub label: ClassLabel,
    pub bin: OcclusionBin,
}

impl TryFrom<&GroundTruthInstance> for GtEntry {
    type Error = EvalError;

    fn try_from(g: &GroundTruthInstance) -> Result<Self, Self::Error> {
        Ok(GtEntry {
            bbox: g.bbox,
            label: g.label,
            bin: g.bin().ok_or_else(|| EvalError::MissingBin(g.id.clone()))?,
        })
    }
}

/// Confusion counts for each of the ten occlusion bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinCounts(pub [ConfusionCounts; 10]);

impl BinCounts {
    pub fn overall(&self) -> ConfusionCounts {
        self.0.iter().fold(ConfusionCounts::default(), |acc, c| acc + *c)
    }

    pub fn bin(&self, b: OcclusionBin) -> ConfusionCounts {
        self.0[b.index()]
    }
}

impl core::ops::AddAssign for BinCounts {
    fn add_assign(&mut self, o: Self) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
    }
}

/// Bin that receives an unmatched rider-verdict candidate.
pub fn fp_bin(pred: &BBox, gt: &[GtEntry]) -> OcclusionBin {
    let (pcx, pcy) = pred.center();
    let dist = |b: &BBox| {
        let (cx, cy) = b.center();
        (cx - pcx) * (cx - pcx) + (cy - pcy) * (cy - pcy)
    };
    gt.iter()
        .map(|g| (g, iou(pred, &g.bbox), dist(&g.bbox)))
        .min_by(|a, b| b.1.total_cmp(&a.1).then(a.2.total_cmp(&b.2)))
        .map(|(g, _, _)| g.bin)
        .unwrap_or_else(|| OcclusionBin::new(0).expect("bin 0"))
}

/// Buckets one image's outcomes by ground-truth bin.
pub fn confusion_from_matches(gt: &[GtEntry], preds: &[Prediction], matches: &MatchResult) -> BinCounts {
    let mut counts = BinCounts::default();
    for (g, entry) in gt.iter().enumerate() {
        let verdict = matches.gt_to_pred[g].map(|p| preds[p].is_rider);
        let c = &mut counts.0[entry.bin.index()];
        match (entry.label, verdict) {
            (ClassLabel::EscooterRider, Some(true)) => c.tp += 1,
            (ClassLabel::EscooterRider, _) => c.fn_ += 1,
            (ClassLabel::OtherVru, Some(true)) => c.fp += 1,
            (ClassLabel::OtherVru, _) => c.tn += 1,
        }
    }
    for (p, pred) in preds.iter().enumerate() {
        if pred.is_rider && matches.pred_to_gt[p].is_none() {
            counts.0[fp_bin(&pred.bbox, gt).index()].fp += 1;
        }
    }
    counts
}

/// Matches and counts every image of `manifest` against `run`. Images that
/// are absent from the run or failed contribute no candidates.
pub fn evaluate_run(
    manifest: &DatasetManifest,
    run: &PipelineRun,
    cfg: &EvaluationConfig,
) -> Result<BinCounts, EvalError> {
    let records: BTreeMap<&str, _> = run.images.iter().map(|r| (r.image_id.as_str(), r)).collect();
    let mut total = BinCounts::default();
    for (image_id, (_, instances)) in manifest.images() {
        let gt: Vec<GtEntry> = instances
            .iter()
            .map(|g| GtEntry::try_from(*g))
            .collect::<Result<_, _>>()?;
        let preds: Vec<Prediction> = records
            .get(image_id)
            .map(|r| {
                r.candidates
                    .iter()
                    .map(|c| Prediction {
                        bbox: c.bbox,
                        score: c.score,
                        is_rider: c.is_rider,
                    })
                    .collect()
            })
            .unwrap_or_default();
        let boxes: Vec<BBox> = gt.iter().map(|g| g.bbox).collect();
        let matches = match_predictions(&boxes, &preds, cfg.iou_threshold);
        total += confusion_from_matches(&gt, &preds, &matches);
    }
    Ok(total)
}

/// Exact accuracy `(tp + tn) / (tp + tn + fp + fn)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn value(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    /// Three-decimal display, rounded half up on the exact ratio.
    pub fn display(&self) -> String {
        display_ratio(self.correct, self.total, 3)
    }
}

impl PartialOrd for Accuracy {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let l = self.correct as u128 * other.total as u128;
        let r = other.correct as u128 * self.total as u128;
        Some(l.cmp(&r))
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<Accuracy, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::EmptyCounts);
    }
    Ok(Accuracy {
        correct: c.correct(),
        total,
    })
}

/// `num / den` rounded half up to `decimals` places, computed in integers.
pub fn display_ratio(num: u64, den: u64, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let scaled = (num as u128 * scale * 2 + den as u128) / (den as u128 * 2);
    let int = scaled / scale;
    let frac = scaled % scale;
    format!("{int}.{frac:0width$}", width = decimals as usize)
}

/// Fixed-point display rounded half away from zero.
pub fn display_fixed(v: f64, decimals: i32) -> String {
    let scale = libm::pow(10.0, decimals as f64);
    let r = libm::round(v * scale) / scale;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.prec$}", prec = decimals as usize)
}

/// One row of a characterization table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinRow {
    /// `"0-9%"` .. `"90-99%"`, or `"overall"`.
    pub bin: String,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// `None` when the row has no outcomes.
    pub accuracy: Option<f64>,
    /// TP / (TP + FN); `None` without rider instances.
    pub tp_rate: Option<f64>,
    /// FN / (TP + FN); `None` without rider instances.
    pub fn_rate: Option<f64>,
}

impl BinRow {
    pub fn from_counts(bin: String, c: ConfusionCounts) -> Self {
        let riders = c.tp + c.fn_;
        let ratio = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64);
        Self {
            bin,
            tp: c.tp,
            tn: c.tn,
            fp: c.fp,
            fn_: c.fn_,
            accuracy: ratio(c.correct(), c.total()),
            tp_rate: ratio(c.tp, riders),
            fn_rate: ratio(c.fn_, riders),
        }
    }

    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts::new(self.tp, self.tn, self.fp, self.fn_)
    }
}

/// Identifies what produced a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDescriptor {
    pub label: String,
    pub toolkit_version: String,
    pub manifest_digest: String,
    pub config_hash: String,
    pub pipeline_mode: String,
    pub detector: String,
    pub classifier: String,
    pub iou_threshold: f64,
    pub tn_rule: String,
    pub fp_bin_rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinMetricsTable {
    pub run: RunDescriptor,
    /// Exactly ten rows, bin 0 first.
    pub rows: Vec<BinRow>,
    pub overall: BinRow,
}

impl BinMetricsTable {
    pub fn from_counts(run: RunDescriptor, counts: &BinCounts) -> Self {
        let rows = OcclusionBin::all()
            .map(|b| BinRow::from_counts(b.label(), counts.bin(b)))
            .collect();
        Self {
            run,
            rows,
            overall: BinRow::from_counts(String::from("overall"), counts.overall()),
        }
    }

    pub fn counts(&self) -> BinCounts {
        let mut out = BinCounts::default();
        for (slot, row) in out.0.iter_mut().zip(&self.rows) {
            *slot = row.counts();
        }
        out
    }

    pub fn overall_accuracy(&self) -> Result<Accuracy, EvalError> {
        accuracy(&self.overall.counts())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinDelta {
    pub bin: String,
    /// Percentage points, `None` when either side is undefined.
    pub accuracy_pp: Option<f64>,
    pub tp_rate_pp: Option<f64>,
    pub fn_rate_pp: Option<f64>,
    pub fp_delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub accuracy_a: Option<f64>,
    pub accuracy_b: Option<f64>,
    /// `(accuracy_a - accuracy_b) * 100`, unrounded.
    pub overall_delta_pp: Option<f64>,
    pub per_bin: Vec<BinDelta>,
    /// Bins where `a` does not achieve a strictly higher accuracy than `b`.
    pub non_dominant_bins: Vec<String>,
}

fn pp(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?) * 100.0)
}

pub fn compare_runs(a: &BinMetricsTable, b: &BinMetricsTable) -> Result<Comparison, EvalError> {
    if a.run.manifest_digest != b.run.manifest_digest {
        return Err(EvalError::ManifestMismatch(
            a.run.manifest_digest.clone(),
            b.run.manifest_digest.clone(),
        ));
    }
    let per_bin: Vec<BinDelta> = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(ra, rb)| BinDelta {
            bin: ra.bin.clone(),
            accuracy_pp: pp(ra.accuracy, rb.accuracy),
            tp_rate_pp: pp(ra.tp_rate, rb.tp_rate),
            fn_rate_pp: pp(ra.fn_rate, rb.fn_rate),
            fp_delta: ra.fp as i64 - rb.fp as i64,
        })
        .collect();
    let non_dominant_bins = a
        .rows
        .iter()
        .zip(&b.rows)
        .filter(|(ra, rb)| matches!((ra.accuracy, rb.accuracy), (Some(x), Some(y)) if x <= y))
        .map(|(ra, _)| ra.bin.clone())
        .collect();
    Ok(Comparison {
        a: a.run.label.clone(),
        b: b.run.label.clone(),
        accuracy_a: a.overall.accuracy,
        accuracy_b: b.overall.accuracy,
        overall_delta_pp: pp(a.overall.accuracy, b.overall.accuracy),
        per_bin,
        non_dominant_bins,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpCounts {
    pub run: String,
    pub total: u64,
    pub per_bin: [u64; 10],
}

pub fn fp_count_by_run(runs: &[BinMetricsTable]) -> Vec<FpCounts> {
    runs.iter()
        .map(|t| {
            let mut per_bin = [0u64; 10];
            for (slot, row) in per_bin.iter_mut().zip(&t.rows) {
                *slot = row.fp;
            }
            FpCounts {
                run: t.run.label.clone(),
                total: per_bin.iter().sum(),
                per_bin,
            }
        })
        .collect()
}
