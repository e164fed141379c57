//! Tool configuration: JSON document, `dotted.key=value` overrides and the
//! configuration hash embedded in outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use occbench_core::annotation::{PartWeightTable, VisibilityMode};
use occbench_core::evaluation::EvaluationConfig;
use occbench_core::pipeline::{ClassifierLabel, PipelineConfig};
use occbench_core::synthesis::AnnotationContext;

use crate::error::{Result, ToolError};
use crate::manifest_io::{read_input, sha256_hex};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "OCCBENCH_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSettings {
    pub mode: VisibilityMode,
    /// Part weights; the toolkit default table when absent.
    pub weights: Option<PartWeightTable>,
    /// Stored-vs-recomputed gap, in percentage points, that counts as drift.
    pub drift_threshold_pp: f64,
}

impl Default for AnnotationSettings {
    fn default() -> Self {
        Self {
            mode: VisibilityMode::Fractional,
            weights: None,
            drift_threshold_pp: 0.5,
        }
    }
}

impl AnnotationSettings {
    pub fn context(&self) -> AnnotationContext {
        AnnotationContext {
            weights: self.weights.unwrap_or_default(),
            mode: self.mode,
            ..AnnotationContext::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorSpec {
    Oracle {
        #[serde(default)]
        drop_rate: f64,
        #[serde(default)]
        jitter: f64,
        #[serde(default)]
        seed: u64,
    },
    Precomputed {
        path: String,
    },
    Process {
        command: Vec<String>,
    },
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec::Oracle {
            drop_rate: 0.0,
            jitter: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    Oracle {
        #[serde(default)]
        flip_rate: f64,
        #[serde(default)]
        seed: u64,
    },
    Constant {
        label: ClassifierLabel,
        #[serde(default = "one")]
        score: f64,
    },
    Process {
        command: Vec<String>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec::Oracle {
            flip_rate: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub pipeline: PipelineConfig,
    pub evaluation: EvaluationConfig,
    pub annotation: AnnotationSettings,
    pub detector: DetectorSpec,
    pub classifier: ClassifierSpec,
    /// Upper bound on concurrently processed images.
    pub workers: usize,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            evaluation: EvaluationConfig::default(),
            annotation: AnnotationSettings::default(),
            detector: DetectorSpec::default(),
            classifier: ClassifierSpec::default(),
            workers: 4,
        }
    }
}

impl ToolConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: ToolConfig = serde_json::from_slice(bytes).map_err(|e| ToolError::validation("config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_json(&read_input(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        let t = self.evaluation.iou_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(ToolError::validation(
                "config",
                "evaluation.iou_threshold must lie in (0, 1]",
            ));
        }
        if self.annotation.drift_threshold_pp.is_nan() || self.annotation.drift_threshold_pp < 0.0 {
            return Err(ToolError::validation(
                "config",
                "annotation.drift_threshold_pp must be non-negative",
            ));
        }
        if self.workers == 0 {
            return Err(ToolError::validation("config", "workers must be at least 1"));
        }
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        match &self.detector {
            DetectorSpec::Oracle { drop_rate, jitter, .. }
                if !rate_ok(*drop_rate) || jitter.is_nan() || *jitter < 0.0 =>
            {
                return Err(ToolError::validation(
                    "config",
                    "detector.drop_rate must lie in [0, 1] and jitter be non-negative",
                ));
            }
            DetectorSpec::Process { command } if command.is_empty() => {
                return Err(ToolError::validation("config", "detector.command is empty"));
            }
            _ => {}
        }
        match &self.classifier {
            ClassifierSpec::Oracle { flip_rate, .. } if !rate_ok(*flip_rate) => {
                return Err(ToolError::validation(
                    "config",
                    "classifier.flip_rate must lie in [0, 1]",
                ));
            }
            ClassifierSpec::Constant { score, .. } if !rate_ok(*score) => {
                return Err(ToolError::validation("config", "classifier.score must lie in [0, 1]"));
            }
            ClassifierSpec::Process { command } if command.is_empty() => {
                return Err(ToolError::validation("config", "classifier.command is empty"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Applies `key.path=value` overrides in order. Values parse as JSON and
    /// fall back to plain strings. Setting a `kind` key resets its object.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| ToolError::validation("config", format!("override `{o}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)
                .map_err(|m| ToolError::validation("config", format!("override `{o}`: {m}")))?;
        }
        let cfg: ToolConfig = serde_json::from_value(doc).map_err(|e| ToolError::validation("config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::manifest_io::to_json_bytes(self)
    }

    /// SHA-256 of the configuration without `workers`, which never changes
    /// results.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("workers");
        }
        sha256_hex(&serde_json::to_vec(&v).expect("config serializes"))
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> std::result::Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err("empty key segment".into());
    }
    let (last, parents) = parts.split_last().expect("at least one segment");
    let mut cur = doc;
    for p in parents {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| format!("`{p}` is not inside an object"))?;
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| format!("parent of `{last}` is not an object"))?;
    if *last == "kind" {
        obj.clear();
    }
    obj.insert(last.to_string(), value);
    Ok(())
}
