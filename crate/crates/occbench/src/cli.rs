//! Subcommand implementations behind the `occbench` binary.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use occbench_core::model::{DatasetManifest, Generator};
use occbench_core::pipeline::{Classification, FailureKind, PipelineRun};
use occbench_core::TOOLKIT_VERSION;

use crate::annotate::{annotate_manifest, is_flagged, AnnotationReport};
use crate::backend::{
    ClassifierBackend, ConstantClassifier, DetectorBackend, OracleClassifier, OracleDetector, PrecomputedDetector,
    ProcessBackend,
};
use crate::config::{ClassifierSpec, DetectorSpec, ToolConfig, CONFIG_ENV};
use crate::error::{Result, ToolError};
use crate::manifest_io::{load_manifest, load_weights, read_input, serialize_manifest, to_json_bytes, write_output};
use crate::report::{
    comparison_csv, comparison_report, evaluate, fp_counts_csv, metrics_csv, series_csv, stats_csv, stats_report,
    SERIES,
};
use crate::run::{run_dataset, RunSetup};
use crate::synth::synthesize_from_plan;

/// Occlusion-aware e-scooter-rider detection benchmark toolkit.
///
/// Exit codes: 0 success, 1 validation failure, 2 backend failure,
/// 3 internal error. Errors are printed to stderr as one JSON line.
#[derive(Debug, Parser)]
#[command(name = "occbench", version)]
pub struct Cli {
    /// Configuration file (JSON).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `pipeline.mode=baseline_eq1`.
    /// Repeatable; values parse as JSON, otherwise as strings.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recompute occlusion levels and report stored-vs-recomputed drift.
    Annotate {
        #[arg(long)]
        manifest: PathBuf,
        /// Manifest with recomputed levels.
        #[arg(long)]
        out: PathBuf,
        /// Discrepancy report (JSON); defaults next to `--out`.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Part weight table (flat JSON object); overrides the configuration.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Exit 0 even when drift is found.
        #[arg(long)]
        allow_drift: bool,
    },
    /// Build an occluded dataset from a synthesis plan.
    Synthesize {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the detection pipeline over a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Pipeline run record (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Per-stage wall-clock timings (JSON).
        #[arg(long)]
        timings: Option<PathBuf>,
    },
    /// Match a run against ground truth and write per-bin metrics.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Run label used in comparisons; defaults to the pipeline mode.
        #[arg(long)]
        label: Option<String>,
    },
    /// Compare two evaluated runs (metrics.json files) on the same manifest.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-bin, per-class instance counts.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    serde_json::from_slice(&read_input(path)?)
        .map_err(|e| ToolError::validation("malformed_document", format!("{what} {}: {e}", path.display())))
}

pub fn make_detector(spec: &DetectorSpec, manifest: &DatasetManifest) -> Result<Box<dyn DetectorBackend>> {
    Ok(match spec {
        DetectorSpec::Oracle {
            drop_rate,
            jitter,
            seed,
        } => Box::new(OracleDetector::new(manifest, *drop_rate, *jitter, *seed)),
        DetectorSpec::Precomputed { path } => Box::new(
            PrecomputedDetector::from_json(path.clone(), &read_input(Path::new(path))?)
                .map_err(|e| ToolError::validation("malformed_document", e))?,
        ),
        DetectorSpec::Process { command } => {
            Box::new(ProcessBackend::spawn(command).map_err(|e| ToolError::Backend(e.to_string()))?)
        }
    })
}

pub fn make_classifier(spec: &ClassifierSpec, manifest: &DatasetManifest) -> Result<Box<dyn ClassifierBackend>> {
    Ok(match spec {
        ClassifierSpec::Oracle { flip_rate, seed } => Box::new(OracleClassifier::new(manifest, *flip_rate, *seed)),
        ClassifierSpec::Constant { label, score } => Box::new(ConstantClassifier {
            verdict: Classification {
                label: *label,
                score: *score,
            },
        }),
        ClassifierSpec::Process { command } => {
            Box::new(ProcessBackend::spawn(command).map_err(|e| ToolError::Backend(e.to_string()))?)
        }
    })
}

/// Runs the pipeline as configured and returns the record.
pub fn run_with_config(
    cfg: &ToolConfig,
    manifest: &DatasetManifest,
    base_dir: &Path,
) -> Result<(PipelineRun, crate::run::StageTimings)> {
    let det = make_detector(&cfg.detector, manifest)?;
    let cls = make_classifier(&cfg.classifier, manifest)?;
    let hash = cfg.hash();
    run_dataset(
        manifest,
        base_dir,
        &RunSetup {
            config: &cfg.pipeline,
            config_hash: &hash,
            detector: det.as_ref(),
            classifier: cls.as_ref(),
            workers: cfg.workers,
        },
    )
}

/// Executes one command line. Output files are written before any error
/// that reports on their content (drift, failed images) is returned.
pub fn execute(cli: Cli) -> Result<()> {
    let cfg = ToolConfig::load(cli.config.as_deref())?.with_overrides(&cli.overrides)?;
    if cli.dump_config {
        print!("{}", String::from_utf8(cfg.to_json()).expect("utf-8 json"));
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(ToolError::validation("usage", "no subcommand given; see --help"));
    };
    let hash = cfg.hash();
    match command {
        Command::Annotate {
            manifest,
            out,
            report,
            weights,
            allow_drift,
        } => {
            let (m, base) = load_manifest(&manifest)?;
            let mut settings = cfg.annotation.clone();
            if let Some(w) = weights {
                settings.weights = Some(load_weights(&w)?);
            }
            let ctx = settings.context();
            let (mut updated, rows) = annotate_manifest(&m, &base, &ctx, settings.drift_threshold_pp)?;
            updated.generator = Some(Generator {
                toolkit_version: TOOLKIT_VERSION.into(),
                config_hash: hash.clone(),
            });
            let flagged = rows.iter().filter(|r| is_flagged(r)).count();
            let doc = AnnotationReport {
                toolkit_version: TOOLKIT_VERSION.into(),
                config_hash: hash,
                weights: ctx.weights,
                mode: ctx.mode,
                drift_threshold_pp: settings.drift_threshold_pp,
                checked: rows.len(),
                flagged,
                rows,
            };
            let report = report.unwrap_or_else(|| out.with_extension("report.json"));
            write_output(&out, &serialize_manifest(&updated))?;
            write_output(&report, &to_json_bytes(&doc))?;
            println!("annotate: {} instances, {flagged} flagged", doc.checked);
            if flagged > 0 && !allow_drift {
                return Err(ToolError::validation(
                    "annotation_drift",
                    format!(
                        "{flagged} instances differ from their stored level; see {}",
                        report.display()
                    ),
                ));
            }
            Ok(())
        }
        Command::Synthesize { plan, out_dir } => {
            let m = synthesize_from_plan(&plan, &out_dir, &cfg.annotation.context(), &hash)?;
            println!(
                "synthesize: {} instances written to {}",
                m.instances.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Run { manifest, out, timings } => {
            let (m, base) = load_manifest(&manifest)?;
            let (run, t) = run_with_config(&cfg, &m, &base)?;
            write_output(&out, &to_json_bytes(&run))?;
            if let Some(path) = timings {
                write_output(&path, &to_json_bytes(&t))?;
            }
            println!("run: {} images, {} failed", run.images.len(), run.failed_images.len());
            if run.failed_images.is_empty() {
                return Ok(());
            }
            let backend = run
                .images
                .iter()
                .filter_map(|r| r.error.as_ref())
                .any(|e| e.kind == FailureKind::BackendFailure);
            let msg = format!(
                "{} images failed: {}",
                run.failed_images.len(),
                run.failed_images.join(", ")
            );
            Err(if backend {
                ToolError::Backend(msg)
            } else {
                ToolError::validation("image_unreadable", msg)
            })
        }
        Command::Evaluate {
            manifest,
            run,
            out_dir,
            label,
        } => {
            let (m, _) = load_manifest(&manifest)?;
            let run: PipelineRun = parse_json(&run, "pipeline run")?;
            let table = evaluate(&m, &run, &cfg.evaluation, label.as_deref())?;
            write_output(&out_dir.join("metrics.json"), &to_json_bytes(&table))?;
            write_output(&out_dir.join("metrics.csv"), metrics_csv(&table).as_bytes())?;
            let acc = table
                .overall_accuracy()
                .map(|a| a.display())
                .unwrap_or_else(|_| "undefined".into());
            println!("evaluate: {} overall accuracy {acc}", table.run.label);
            Ok(())
        }
        Command::Compare { a, b, out_dir } => {
            let ta = parse_json(&a, "metrics")?;
            let tb = parse_json(&b, "metrics")?;
            let rep = comparison_report(&ta, &tb)?;
            write_output(&out_dir.join("comparison.json"), &to_json_bytes(&rep))?;
            write_output(
                &out_dir.join("comparison.csv"),
                comparison_csv(&rep, &ta, &tb).as_bytes(),
            )?;
            for metric in SERIES {
                let name = format!("series_{metric}.csv");
                write_output(&out_dir.join(name), series_csv(metric, &[&ta, &tb]).as_bytes())?;
            }
            write_output(
                &out_dir.join("fp_counts.csv"),
                fp_counts_csv(&rep.fp_counts, &[&ta, &tb]).as_bytes(),
            )?;
            let delta = rep
                .comparison
                .overall_delta_pp
                .map(|d| occbench_core::evaluation::display_fixed(d, 2))
                .unwrap_or_else(|| "undefined".into());
            println!("compare: {} vs {}: {delta} pp", rep.a.label, rep.b.label);
            Ok(())
        }
        Command::Stats { manifest, out_dir } => {
            let (m, _) = load_manifest(&manifest)?;
            let r = stats_report(&m, &hash);
            if let Some(dir) = out_dir {
                write_output(&dir.join("stats.json"), &to_json_bytes(&r))?;
                write_output(&dir.join("stats.csv"), stats_csv(&r).as_bytes())?;
            }
            println!(
                "stats: total {} escooter_rider {} other_vru {}",
                r.total, r.escooter_rider, r.other_vru
            );
            Ok(())
        }
    }
}
