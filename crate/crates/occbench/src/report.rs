//! Evaluation tables, comparisons and plot-ready series as JSON and CSV.
//!
//! CSV files open with `# key: value` metadata lines followed by a header
//! row. Parsers skip the metadata through the `#` comment character.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use occbench_core::annotation::OcclusionBin;
use occbench_core::evaluation::{
    compare_runs, display_fixed, display_ratio, evaluate_run, fp_count_by_run, BinCounts, BinMetricsTable, BinRow,
    Comparison, EvaluationConfig, FpCounts, RunDescriptor, FP_BIN_RULE, TN_RULE,
};
use occbench_core::model::{manifest_stats, ClassLabel, ConfusionCounts, DatasetManifest, ManifestStats};
use occbench_core::pipeline::{BackendDescriptor, PipelineMode, PipelineRun};
use occbench_core::TOOLKIT_VERSION;

use crate::error::{Result, ToolError};
use crate::manifest_io::manifest_digest;

pub const METRIC_COLUMNS: [&str; 8] = ["bin", "tp", "tn", "fp", "fn", "accuracy", "tp_rate", "fn_rate"];

fn describe(d: &BackendDescriptor) -> String {
    format!("{} {}", d.name, d.version)
}

fn mode_name(m: PipelineMode) -> &'static str {
    match m {
        PipelineMode::BaselineEq1 => "baseline_eq1",
        PipelineMode::OcclusionAware => "occlusion_aware",
    }
}

/// Evaluates `run` against `manifest` and labels the table.
pub fn evaluate(
    manifest: &DatasetManifest,
    run: &PipelineRun,
    cfg: &EvaluationConfig,
    label: Option<&str>,
) -> Result<BinMetricsTable> {
    let digest = manifest_digest(manifest);
    if run.manifest_digest != digest {
        return Err(ToolError::validation(
            "manifest_mismatch",
            format!(
                "run was produced on manifest {} but {} was given",
                run.manifest_digest, digest
            ),
        ));
    }
    let counts = evaluate_run(manifest, run, cfg)?;
    let descriptor = RunDescriptor {
        label: label.unwrap_or(mode_name(run.config.mode)).into(),
        toolkit_version: TOOLKIT_VERSION.into(),
        manifest_digest: digest,
        config_hash: run.config_hash.clone(),
        pipeline_mode: mode_name(run.config.mode).into(),
        detector: describe(&run.detector),
        classifier: describe(&run.classifier),
        iou_threshold: cfg.iou_threshold,
        tn_rule: TN_RULE.into(),
        fp_bin_rule: FP_BIN_RULE.into(),
    };
    Ok(BinMetricsTable::from_counts(descriptor, &counts))
}

fn metadata(d: &RunDescriptor) -> Vec<(&'static str, String)> {
    vec![
        ("label", d.label.clone()),
        ("toolkit_version", d.toolkit_version.clone()),
        ("manifest_digest", d.manifest_digest.clone()),
        ("config_hash", d.config_hash.clone()),
        ("pipeline_mode", d.pipeline_mode.clone()),
        ("detector", d.detector.clone()),
        ("classifier", d.classifier.clone()),
        ("iou_threshold", d.iou_threshold.to_string()),
        ("tn_rule", d.tn_rule.clone()),
        ("fp_bin_rule", d.fp_bin_rule.clone()),
    ]
}

fn comment_block(prefix: &str, pairs: &[(&str, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("# {prefix}{k}: {}\n", v.replace('\n', " ")))
        .collect()
}

fn csv_body<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.as_ref()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn opt_ratio(num: u64, den: u64) -> String {
    if den == 0 {
        String::new()
    } else {
        display_ratio(num, den, 3)
    }
}

fn metric_cells(bin: &str, c: &ConfusionCounts) -> [String; 8] {
    let riders = c.tp + c.fn_;
    [
        bin.to_string(),
        c.tp.to_string(),
        c.tn.to_string(),
        c.fp.to_string(),
        c.fn_.to_string(),
        opt_ratio(c.correct(), c.total()),
        opt_ratio(c.tp, riders),
        opt_ratio(c.fn_, riders),
    ]
}

/// One row per bin plus `overall`; ratios at three decimals.
pub fn metrics_csv(t: &BinMetricsTable) -> String {
    let mut rows: Vec<[String; 8]> = t.rows.iter().map(|r| metric_cells(&r.bin, &r.counts())).collect();
    rows.push(metric_cells("overall", &t.overall.counts()));
    comment_block("", &metadata(&t.run)) + &csv_body(&METRIC_COLUMNS, &rows)
}

fn parse_metadata(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn bad_csv(e: impl ToString) -> ToolError {
    ToolError::validation("malformed_document", e)
}

#[derive(Deserialize)]
struct MetricRow {
    bin: String,
    tp: u64,
    tn: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
}

/// Rebuilds a table from [`metrics_csv`] output.
pub fn parse_metrics_csv(text: &str) -> Result<BinMetricsTable> {
    let meta = parse_metadata(text);
    let get = |k: &str| {
        meta.get(k)
            .cloned()
            .ok_or_else(|| bad_csv(format!("metrics csv lacks `{k}`")))
    };
    let run = RunDescriptor {
        label: get("label")?,
        toolkit_version: get("toolkit_version")?,
        manifest_digest: get("manifest_digest")?,
        config_hash: get("config_hash")?,
        pipeline_mode: get("pipeline_mode")?,
        detector: get("detector")?,
        classifier: get("classifier")?,
        iou_threshold: get("iou_threshold")?.parse().map_err(bad_csv)?,
        tn_rule: get("tn_rule")?,
        fp_bin_rule: get("fp_bin_rule")?,
    };
    let mut counts = BinCounts::default();
    let mut overall = None;
    let mut seen = 0;
    for row in csv_reader(text).deserialize::<MetricRow>() {
        let r = row.map_err(bad_csv)?;
        let c = ConfusionCounts::new(r.tp, r.tn, r.fp, r.fn_);
        if r.bin == "overall" {
            overall = Some(c);
            continue;
        }
        let bin = OcclusionBin::all()
            .find(|b| b.label() == r.bin)
            .ok_or_else(|| bad_csv(format!("unknown bin `{}`", r.bin)))?;
        counts.0[bin.index()] = c;
        seen += 1;
    }
    if seen != 10 {
        return Err(bad_csv("metrics csv must have ten bin rows"));
    }
    let table = BinMetricsTable::from_counts(run, &counts);
    if overall != Some(table.overall.counts()) {
        return Err(bad_csv("overall row does not equal the sum of bin rows"));
    }
    Ok(table)
}

/// Comparison document with both run descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub toolkit_version: String,
    pub a: RunDescriptor,
    pub b: RunDescriptor,
    pub comparison: Comparison,
    pub fp_counts: Vec<FpCounts>,
}

pub fn comparison_report(a: &BinMetricsTable, b: &BinMetricsTable) -> Result<ComparisonReport> {
    Ok(ComparisonReport {
        toolkit_version: TOOLKIT_VERSION.into(),
        a: a.run.clone(),
        b: b.run.clone(),
        comparison: compare_runs(a, b)?,
        fp_counts: fp_count_by_run(&[a.clone(), b.clone()]),
    })
}

fn both_runs_meta(a: &RunDescriptor, b: &RunDescriptor) -> String {
    let mut s = format!("# toolkit_version: {TOOLKIT_VERSION}\n");
    s += &comment_block("a.", &metadata(a));
    s += &comment_block("b.", &metadata(b));
    s
}

fn pp(v: Option<f64>) -> String {
    v.map(|x| display_fixed(x, 2)).unwrap_or_default()
}

fn acc(r: &BinRow) -> String {
    let c = r.counts();
    opt_ratio(c.correct(), c.total())
}

/// Per-bin deltas in percentage points, two decimals.
pub fn comparison_csv(rep: &ComparisonReport, a: &BinMetricsTable, b: &BinMetricsTable) -> String {
    let header = [
        "bin",
        "accuracy_a",
        "accuracy_b",
        "accuracy_delta_pp",
        "tp_rate_delta_pp",
        "fn_rate_delta_pp",
        "fp_a",
        "fp_b",
        "fp_delta",
        "a_exceeds_b",
    ];
    let c = &rep.comparison;
    let mut rows: Vec<[String; 10]> = Vec::new();
    for ((d, ra), rb) in c.per_bin.iter().zip(&a.rows).zip(&b.rows) {
        let exceeds = match (ra.accuracy, rb.accuracy) {
            (Some(x), Some(y)) => (x > y).to_string(),
            _ => String::new(),
        };
        rows.push([
            d.bin.clone(),
            acc(ra),
            acc(rb),
            pp(d.accuracy_pp),
            pp(d.tp_rate_pp),
            pp(d.fn_rate_pp),
            ra.fp.to_string(),
            rb.fp.to_string(),
            d.fp_delta.to_string(),
            exceeds,
        ]);
    }
    rows.push([
        "overall".into(),
        acc(&a.overall),
        acc(&b.overall),
        pp(c.overall_delta_pp),
        pp(pp_delta(a.overall.tp_rate, b.overall.tp_rate)),
        pp(pp_delta(a.overall.fn_rate, b.overall.fn_rate)),
        a.overall.fp.to_string(),
        b.overall.fp.to_string(),
        (a.overall.fp as i64 - b.overall.fp as i64).to_string(),
        match (a.overall.accuracy, b.overall.accuracy) {
            (Some(x), Some(y)) => (x > y).to_string(),
            _ => String::new(),
        },
    ]);
    both_runs_meta(&rep.a, &rep.b) + &csv_body(&header, &rows)
}

fn pp_delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?) * 100.0)
}

/// Metrics available as per-bin series.
pub const SERIES: [&str; 4] = ["accuracy", "tp_rate", "fn_rate", "fp"];

/// `x = bin label`, one `y` column per run.
pub fn series_csv(metric: &str, tables: &[&BinMetricsTable]) -> String {
    let mut header = vec!["bin".to_string()];
    header.extend(tables.iter().map(|t| t.run.label.clone()));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..10)
        .map(|i| {
            let mut row = vec![tables.first().map(|t| t.rows[i].bin.clone()).unwrap_or_default()];
            for t in tables {
                let r = &t.rows[i];
                let c = r.counts();
                row.push(match metric {
                    "accuracy" => opt_ratio(c.correct(), c.total()),
                    "tp_rate" => opt_ratio(c.tp, c.tp + c.fn_),
                    "fn_rate" => opt_ratio(c.fn_, c.tp + c.fn_),
                    _ => c.fp.to_string(),
                });
            }
            row
        })
        .collect();
    let mut meta = format!("# toolkit_version: {TOOLKIT_VERSION}\n# metric: {metric}\n");
    for (i, t) in tables.iter().enumerate() {
        meta += &comment_block(&format!("run{i}."), &metadata(&t.run));
    }
    meta + &csv_body(&header_refs, &rows)
}

/// One row per run: total then per-bin false positives.
pub fn fp_counts_csv(counts: &[FpCounts], tables: &[&BinMetricsTable]) -> String {
    let mut header = vec!["run".to_string(), "total".to_string()];
    header.extend(OcclusionBin::all().map(|b| b.label()));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = counts
        .iter()
        .map(|c| {
            let mut row = vec![c.run.clone(), c.total.to_string()];
            row.extend(c.per_bin.iter().map(u64::to_string));
            row
        })
        .collect();
    let mut meta = format!("# toolkit_version: {TOOLKIT_VERSION}\n");
    for (i, t) in tables.iter().enumerate() {
        meta += &comment_block(&format!("run{i}."), &metadata(&t.run));
    }
    meta + &csv_body(&header_refs, &rows)
}

pub fn parse_fp_counts_csv(text: &str) -> Result<Vec<FpCounts>> {
    let mut r = csv_reader(text);
    let headers = r.headers().map_err(bad_csv)?.clone();
    if headers.len() != 12 || &headers[0] != "run" || &headers[1] != "total" {
        return Err(bad_csv("fp counts csv must have run,total and ten bin columns"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(bad_csv)?;
        let num = |i: usize| rec[i].parse::<u64>().map_err(bad_csv);
        let mut per_bin = [0u64; 10];
        for (b, slot) in per_bin.iter_mut().enumerate() {
            *slot = num(b + 2)?;
        }
        let total = num(1)?;
        if total != per_bin.iter().sum::<u64>() {
            return Err(bad_csv(format!("run `{}`: total differs from the bin sum", &rec[0])));
        }
        out.push(FpCounts {
            run: rec[0].to_string(),
            total,
            per_bin,
        });
    }
    Ok(out)
}

/// Per-bin, per-class instance counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub toolkit_version: String,
    pub config_hash: String,
    pub manifest_digest: String,
    pub total: u64,
    pub escooter_rider: u64,
    pub other_vru: u64,
    pub stats: ManifestStats,
}

pub fn stats_report(m: &DatasetManifest, config_hash: &str) -> StatsReport {
    let stats = manifest_stats(m);
    StatsReport {
        toolkit_version: TOOLKIT_VERSION.into(),
        config_hash: config_hash.into(),
        manifest_digest: manifest_digest(m),
        total: stats.total,
        escooter_rider: stats.class_total(ClassLabel::EscooterRider),
        other_vru: stats.class_total(ClassLabel::OtherVru),
        stats,
    }
}

pub fn stats_csv(r: &StatsReport) -> String {
    let mut rows: Vec<[String; 4]> = OcclusionBin::all()
        .map(|b| {
            [
                b.label(),
                r.stats.count(b, ClassLabel::EscooterRider).to_string(),
                r.stats.count(b, ClassLabel::OtherVru).to_string(),
                r.stats.bin_total(b).to_string(),
            ]
        })
        .collect();
    rows.push([
        "total".into(),
        r.escooter_rider.to_string(),
        r.other_vru.to_string(),
        r.total.to_string(),
    ]);
    let meta = comment_block(
        "",
        &[
            ("toolkit_version", r.toolkit_version.clone()),
            ("config_hash", r.config_hash.clone()),
            ("manifest_digest", r.manifest_digest.clone()),
            ("backends", "none".into()),
        ],
    );
    meta + &csv_body(&["bin", "escooter_rider", "other_vru", "total"], &rows)
}
