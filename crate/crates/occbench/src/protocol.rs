//! Line-delimited JSON protocol spoken with external model processes.
//!
//! Each request is one line `{"op", "id", "payload"}`; each response is one
//! line `{"id", "ok", "payload"}` or `{"id", "ok": false, "error"}` that
//! echoes the request id.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use occbench_core::pipeline::{Classification, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub op: String,
    pub id: String,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    /// `null` when the request line could not be parsed far enough to read
    /// its id.
    pub id: Option<String>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Payload of a `hello` response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub name: String,
    pub version: String,
    pub ops: Vec<String>,
    pub max_concurrent_sessions: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectPayload {
    /// Path of the image file.
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResult {
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyPayload {
    /// Path of a PNG crop in the shared scratch directory.
    pub crop: String,
}

pub type ClassifyResult = Classification;
