//! Manifest and weight-table documents.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use occbench_core::annotation::PartWeightTable;
use occbench_core::model::{DatasetManifest, GroundTruthInstance, ManifestError};

use crate::error::{Result, ToolError};

/// Parses and fully validates a manifest document.
pub fn parse_manifest(bytes: &[u8]) -> Result<DatasetManifest, ManifestError> {
    let m: DatasetManifest =
        serde_json::from_slice(bytes).map_err(|e| ManifestError::MalformedDocument(e.to_string()))?;
    m.validate()?;
    Ok(m)
}

pub fn serialize_manifest(m: &DatasetManifest) -> Vec<u8> {
    to_json_bytes(m)
}

/// SHA-256 over the dataset content (version and instances). Generator
/// metadata does not take part, so re-emitting a dataset keeps its digest.
pub fn manifest_digest(m: &DatasetManifest) -> String {
    #[derive(Serialize)]
    struct Content<'a> {
        version: &'a str,
        instances: &'a [GroundTruthInstance],
    }
    let bytes = serde_json::to_vec(&Content {
        version: &m.version,
        instances: &m.instances,
    })
    .expect("manifest serializes");
    sha256_hex(&bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("value serializes");
    out.push(b'\n');
    out
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| ToolError::validation("io", format!("cannot read {}: {e}", path.display())))
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| ToolError::validation("io", format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| ToolError::validation("io", format!("cannot write {}: {e}", path.display())))
}

/// Loads a manifest and returns it with the directory its relative paths
/// resolve against.
pub fn load_manifest(path: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let m = parse_manifest(&read_input(path)?)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((m, dir))
}

/// Flat `{part: weight}` document.
pub fn parse_weights(bytes: &[u8]) -> Result<PartWeightTable> {
    serde_json::from_slice(bytes).map_err(|e| ToolError::validation("weight_table_invalid", e))
}

pub fn load_weights(path: &Path) -> Result<PartWeightTable> {
    parse_weights(&read_input(path)?)
}

pub fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
