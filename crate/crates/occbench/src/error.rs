//! Tool-level errors and their exit codes.

use serde::Serialize;
use thiserror::Error;

use occbench_core::annotation::AnnotationError;
use occbench_core::evaluation::EvalError;
use occbench_core::model::ManifestError;
use occbench_core::pipeline::ConfigError;
use occbench_core::synthesis::SynthesisError;

#[derive(Debug, Error)]
pub enum ToolError {
    /// Bad input: a malformed or inconsistent document, a missing file, an
    /// unmet precondition.
    #[error("{kind}: {message}")]
    Validation { kind: &'static str, message: String },
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    error: ErrorBody<'a>,
}

impl ToolError {
    pub fn validation(kind: &'static str, message: impl ToString) -> Self {
        ToolError::Validation {
            kind,
            message: message.to_string(),
        }
    }

    pub fn internal(message: impl ToString) -> Self {
        ToolError::Internal(message.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            ToolError::Validation { .. } => 1,
            ToolError::Backend(_) => 2,
            ToolError::Internal(_) => 3,
        }
    }

    pub fn kind(&self) -> &str {
        match self {
            ToolError::Validation { kind, .. } => kind,
            ToolError::Backend(_) => "backend_failure",
            ToolError::Internal(_) => "internal",
        }
    }

    /// Single-line JSON written to stderr by the command line.
    pub fn to_json(&self) -> String {
        let message = match self {
            ToolError::Validation { message, .. } => message.clone(),
            ToolError::Backend(m) | ToolError::Internal(m) => m.clone(),
        };
        let doc = ErrorDoc {
            error: ErrorBody {
                kind: self.kind(),
                message,
                exit_code: self.exit_code(),
            },
        };
        serde_json::to_string(&doc).expect("error document serializes")
    }
}

impl From<ManifestError> for ToolError {
    fn from(e: ManifestError) -> Self {
        let kind = match e {
            ManifestError::MalformedDocument(_) => "malformed_document",
            ManifestError::DuplicateId(_) => "duplicate_id",
            ManifestError::BinMismatch { .. } => "bin_mismatch",
            ManifestError::OutOfRangeOcclusion { .. } => "out_of_range_occlusion",
            ManifestError::InvalidInstance { .. } => "invalid_instance",
        };
        ToolError::validation(kind, e)
    }
}

impl From<AnnotationError> for ToolError {
    fn from(e: AnnotationError) -> Self {
        ToolError::validation("annotation", e)
    }
}

impl From<EvalError> for ToolError {
    fn from(e: EvalError) -> Self {
        let kind = match e {
            EvalError::MissingBin(_) => "missing_bin",
            EvalError::EmptyCounts => "empty_counts",
            EvalError::ManifestMismatch(..) => "manifest_mismatch",
        };
        ToolError::validation(kind, e)
    }
}

impl From<ConfigError> for ToolError {
    fn from(e: ConfigError) -> Self {
        ToolError::validation("config", e)
    }
}

impl From<SynthesisError> for ToolError {
    fn from(e: SynthesisError) -> Self {
        let kind = match e {
            SynthesisError::QuotaUnmet(_) => "quota_unmet",
            SynthesisError::Infeasible { .. } => "infeasible",
            _ => "synthesis",
        };
        ToolError::validation(kind, e)
    }
}

pub type Result<T, E = ToolError> = std::result::Result<T, E>;
