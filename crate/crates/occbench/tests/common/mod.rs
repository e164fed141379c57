#![allow(dead_code)]

use std::path::{Path, PathBuf};

use occbench::manifest_io::write_output;
use occbench::synth::synthesize_from_plan;
use occbench_core::evaluation::{GtEntry, Prediction};
use occbench_core::geometry::{iou, BBox};
use occbench_core::model::{ClassLabel, ConfusionCounts, DatasetManifest};
use occbench_core::synthesis::AnnotationContext;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Plan with a rider figure, a non-rider figure and two occluders.
pub fn plan_json(quotas: [u32; 10], seed: u64) -> String {
    serde_json::json!({
        "quotas": quotas,
        "seed": seed,
        "bases": [
            {"kind": "uniform_figure", "id": "rider", "label": "escooter_rider", "unit": 1, "margin": 20},
            {"kind": "uniform_figure", "id": "walker", "label": "other_vru", "unit": 1, "margin": 24}
        ],
        "occluders": [
            {"kind": "rectangle", "id": "van", "category": "vehicle", "width": 60, "height": 60, "color": [200, 30, 30]},
            {"kind": "ellipse", "id": "bin", "category": "street_furniture", "width": 50, "height": 70, "color": [30, 160, 40]}
        ]
    })
    .to_string()
}

/// Synthesizes a dataset into `dir` and returns the manifest and its path.
pub fn synth_dataset(dir: &Path, quotas: [u32; 10], seed: u64) -> (DatasetManifest, PathBuf) {
    let plan = dir.join("plan.json");
    write_output(&plan, plan_json(quotas, seed).as_bytes()).unwrap();
    let out = dir.join("data");
    let m = synthesize_from_plan(&plan, &out, &AnnotationContext::default(), "test").unwrap();
    (m, out.join("manifest.json"))
}

/// Matched flag, IoU, negated ground-truth index.
type RankKey = (i32, f64, i64);

/// Exhaustive matcher: lexicographically best assignment over candidates in
/// score order, ranking matches by IoU then lower ground-truth index.
pub fn exhaustive_match(gt: &[BBox], preds: &[Prediction], thr: f64) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.partial_cmp(&preds[a].score).unwrap().then(a.cmp(&b)));
    let mut best: Option<(Vec<RankKey>, Vec<Option<usize>>)> = None;
    let n = gt.len() + 1;
    let total = n.pow(preds.len() as u32);
    for code in 0..total {
        let mut assign = vec![None; preds.len()];
        let mut used = vec![false; gt.len()];
        let mut c = code;
        let mut ok = true;
        for p in 0..preds.len() {
            let choice = c % n;
            c /= n;
            if choice > 0 {
                let g = choice - 1;
                if used[g] || iou(&preds[p].bbox, &gt[g]) < thr {
                    ok = false;
                    break;
                }
                used[g] = true;
                assign[p] = Some(g);
            }
        }
        if !ok {
            continue;
        }
        let key: Vec<RankKey> = order
            .iter()
            .map(|&p| match assign[p] {
                Some(g) => (1, iou(&preds[p].bbox, &gt[g]), -(g as i64)),
                None => (0, 0.0, 0),
            })
            .collect();
        if best
            .as_ref()
            .is_none_or(|(k, _)| key.partial_cmp(k) == Some(std::cmp::Ordering::Greater))
        {
            best = Some((key, assign));
        }
    }
    best.unwrap().1
}

/// Per-bin counts by direct enumeration of the confusion rules.
pub fn brute_force_counts(gt: &[GtEntry], preds: &[Prediction], thr: f64) -> [ConfusionCounts; 10] {
    let boxes: Vec<BBox> = gt.iter().map(|g| g.bbox).collect();
    let pred_to_gt = exhaustive_match(&boxes, preds, thr);
    let mut out = [ConfusionCounts::default(); 10];
    for (g, entry) in gt.iter().enumerate() {
        let verdict = pred_to_gt.iter().position(|m| *m == Some(g)).map(|p| preds[p].is_rider);
        let c = &mut out[entry.bin.index()];
        match (entry.label == ClassLabel::EscooterRider, verdict) {
            (true, Some(true)) => c.tp += 1,
            (true, _) => c.fn_ += 1,
            (false, Some(true)) => c.fp += 1,
            (false, _) => c.tn += 1,
        }
    }
    for (p, pred) in preds.iter().enumerate() {
        if !pred.is_rider || pred_to_gt[p].is_some() {
            continue;
        }
        // highest IoU, then nearest centre, then first listed
        let mut bin = 0;
        let mut best: Option<(f64, f64)> = None;
        let (px, py) = pred.bbox.center();
        for g in gt {
            let v = iou(&pred.bbox, &g.bbox);
            let (cx, cy) = g.bbox.center();
            let d = (cx - px).powi(2) + (cy - py).powi(2);
            let better = match best {
                None => true,
                Some((bv, bd)) => v > bv || (v == bv && d < bd),
            };
            if better {
                best = Some((v, d));
                bin = g.bin.index();
            }
        }
        out[bin].fp += 1;
    }
    out
}
