//! Detector and classifier backends: ground-truth oracles, precomputed
//! detections, constant classifiers and external model processes.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use thiserror::Error;

use occbench_core::geometry::{clip_to_image, iou, BBox, PixelRect};
use occbench_core::model::{ClassLabel, DatasetManifest};
use occbench_core::pipeline::{BackendDescriptor, Classification, ClassifierLabel, Detection};
use occbench_core::synthesis::mix_seed;

use crate::protocol::{ClassifyPayload, DetectPayload, DetectResult, Hello, Request, Response};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct BackendError(pub String);

/// One image handed to a detector.
#[derive(Debug, Clone, Copy)]
pub struct ImageInput<'a> {
    pub id: &'a str,
    pub path: &'a Path,
    pub width: u32,
    pub height: u32,
}

/// One candidate handed to a classifier.
#[derive(Debug, Clone, Copy)]
pub struct CropInput<'a> {
    pub image_id: &'a str,
    pub candidate_index: u32,
    /// Detector box before expansion.
    pub detection: BBox,
    pub crop: PixelRect,
    /// Crop written to disk, present only when the backend asks for it.
    pub crop_path: Option<&'a Path>,
}

pub trait DetectorBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;
    fn detect(&self, image: &ImageInput<'_>) -> Result<Vec<Detection>, BackendError>;
    /// Whether `detect` opens the image file.
    fn reads_pixels(&self) -> bool {
        false
    }
}

pub trait ClassifierBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;
    fn classify(&self, input: &CropInput<'_>) -> Result<Classification, BackendError>;
    /// Whether crops must be written to disk for `classify`.
    fn needs_crop_file(&self) -> bool {
        false
    }
}

fn descriptor(name: &str, version: &str, sessions: u32) -> BackendDescriptor {
    BackendDescriptor {
        name: name.into(),
        version: version.into(),
        max_concurrent_sessions: sessions,
    }
}

fn seed_for(seed: u64, image_id: &str, index: u64) -> u64 {
    let h = image_id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    mix_seed(mix_seed(seed, h), index)
}

/// Emits the ground-truth boxes of each image with score 1.0, optionally
/// dropping or jittering them with a seeded generator.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    boxes: BTreeMap<String, Vec<BBox>>,
    drop_rate: f64,
    jitter: f64,
    seed: u64,
}

impl OracleDetector {
    pub fn new(manifest: &DatasetManifest, drop_rate: f64, jitter: f64, seed: u64) -> Self {
        let mut boxes: BTreeMap<String, Vec<BBox>> = BTreeMap::new();
        for inst in &manifest.instances {
            boxes.entry(inst.image.path.clone()).or_default().push(inst.bbox);
        }
        Self {
            boxes,
            drop_rate,
            jitter,
            seed,
        }
    }

    pub fn perfect(manifest: &DatasetManifest) -> Self {
        Self::new(manifest, 0.0, 0.0, 0)
    }
}

impl DetectorBackend for OracleDetector {
    fn descriptor(&self) -> BackendDescriptor {
        let version = format!("drop={} jitter={} seed={}", self.drop_rate, self.jitter, self.seed);
        descriptor("oracle-detector", &version, u32::MAX)
    }

    fn detect(&self, image: &ImageInput<'_>) -> Result<Vec<Detection>, BackendError> {
        let Some(boxes) = self.boxes.get(image.id) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::with_capacity(boxes.len());
        for (i, b) in boxes.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_for(self.seed, image.id, i as u64));
            if self.drop_rate > 0.0 && rng.random_bool(self.drop_rate.clamp(0.0, 1.0)) {
                continue;
            }
            let mut bbox = *b;
            if self.jitter > 0.0 {
                let dx = rng.random_range(-self.jitter..=self.jitter) * b.w();
                let dy = rng.random_range(-self.jitter..=self.jitter) * b.h();
                if let Ok(moved) = BBox::new(b.x() + dx, b.y() + dy, b.w(), b.h()) {
                    bbox = moved;
                }
            }
            if let Ok(clipped) = clip_to_image(bbox, image.width as f64, image.height as f64) {
                out.push(Detection {
                    bbox: clipped,
                    score: 1.0,
                });
            }
        }
        Ok(out)
    }
}

/// Detections read from a `{image_id: [{bbox, score}]}` document.
#[derive(Debug, Clone)]
pub struct PrecomputedDetector {
    source: String,
    detections: BTreeMap<String, Vec<Detection>>,
}

impl PrecomputedDetector {
    pub fn from_json(source: impl Into<String>, bytes: &[u8]) -> Result<Self, BackendError> {
        let detections: BTreeMap<String, Vec<Detection>> =
            serde_json::from_slice(bytes).map_err(|e| BackendError(format!("precomputed detections: {e}")))?;
        for (id, dets) in &detections {
            if let Some(d) = dets.iter().find(|d| !(0.0..=1.0).contains(&d.score)) {
                return Err(BackendError(format!(
                    "precomputed detections: score {} for `{id}` outside [0, 1]",
                    d.score
                )));
            }
        }
        Ok(Self {
            source: source.into(),
            detections,
        })
    }
}

impl DetectorBackend for PrecomputedDetector {
    fn descriptor(&self) -> BackendDescriptor {
        descriptor("precomputed-detections", &self.source, u32::MAX)
    }

    fn detect(&self, image: &ImageInput<'_>) -> Result<Vec<Detection>, BackendError> {
        Ok(self.detections.get(image.id).cloned().unwrap_or_default())
    }
}

/// Labels a candidate with the class of the ground truth it overlaps most
/// (IoU >= 0.5 against the unexpanded detection box), "not" otherwise.
#[derive(Debug, Clone)]
pub struct OracleClassifier {
    gt: BTreeMap<String, Vec<(BBox, ClassLabel)>>,
    flip_rate: f64,
    seed: u64,
}

impl OracleClassifier {
    pub fn new(manifest: &DatasetManifest, flip_rate: f64, seed: u64) -> Self {
        let mut gt: BTreeMap<String, Vec<(BBox, ClassLabel)>> = BTreeMap::new();
        for inst in &manifest.instances {
            gt.entry(inst.image.path.clone())
                .or_default()
                .push((inst.bbox, inst.label));
        }
        Self { gt, flip_rate, seed }
    }

    pub fn perfect(manifest: &DatasetManifest) -> Self {
        Self::new(manifest, 0.0, 0)
    }
}

impl ClassifierBackend for OracleClassifier {
    fn descriptor(&self) -> BackendDescriptor {
        let version = format!("flip={} seed={}", self.flip_rate, self.seed);
        descriptor("oracle-classifier", &version, u32::MAX)
    }

    fn classify(&self, input: &CropInput<'_>) -> Result<Classification, BackendError> {
        let best = self
            .gt
            .get(input.image_id)
            .into_iter()
            .flatten()
            .map(|(b, l)| (iou(&input.detection, b), *l))
            .filter(|(v, _)| *v >= 0.5)
            .max_by(|a, b| a.0.total_cmp(&b.0));
        let mut rider = matches!(best, Some((_, ClassLabel::EscooterRider)));
        if self.flip_rate > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_for(self.seed, input.image_id, input.candidate_index as u64));
            if rng.random_bool(self.flip_rate.clamp(0.0, 1.0)) {
                rider = !rider;
            }
        }
        Ok(Classification {
            label: if rider {
                ClassifierLabel::EscooterRider
            } else {
                ClassifierLabel::Not
            },
            score: 1.0,
        })
    }
}

/// Returns the same verdict for every crop.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier {
    pub verdict: Classification,
}

impl ClassifierBackend for ConstantClassifier {
    fn descriptor(&self) -> BackendDescriptor {
        let name = match self.verdict.label {
            ClassifierLabel::EscooterRider => "always-rider",
            ClassifierLabel::Not => "always-not",
        };
        descriptor(name, &format!("score={}", self.verdict.score), u32::MAX)
    }

    fn classify(&self, _: &CropInput<'_>) -> Result<Classification, BackendError> {
        Ok(self.verdict)
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

/// External model process speaking the line protocol over its standard
/// streams. Requests are serialized through one session.
pub struct ProcessBackend {
    session: Mutex<Session>,
    hello: Hello,
}

impl ProcessBackend {
    /// Starts `command` and performs the `hello` handshake.
    pub fn spawn(command: &[String]) -> Result<Self, BackendError> {
        let (prog, args) = command
            .split_first()
            .ok_or_else(|| BackendError("empty backend command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError(format!("cannot start `{prog}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let session = Mutex::new(Session {
            child,
            stdin,
            stdout,
            next_id: 0,
        });
        let mut backend = Self {
            session,
            hello: Hello {
                name: String::new(),
                version: String::new(),
                ops: Vec::new(),
                max_concurrent_sessions: 1,
            },
        };
        let payload = backend.request("hello", Value::Null)?;
        backend.hello = serde_json::from_value(payload).map_err(|e| BackendError(format!("bad hello payload: {e}")))?;
        Ok(backend)
    }

    pub fn hello(&self) -> &Hello {
        &self.hello
    }

    fn supports(&self, op: &str) -> Result<(), BackendError> {
        if self.hello.ops.iter().any(|o| o == op) {
            Ok(())
        } else {
            Err(BackendError(format!(
                "backend `{}` does not offer `{op}`",
                self.hello.name
            )))
        }
    }

    /// Sends one request and waits for its response payload.
    pub fn request(&self, op: &str, payload: Value) -> Result<Value, BackendError> {
        let mut s = self
            .session
            .lock()
            .map_err(|_| BackendError("backend session poisoned".into()))?;
        s.next_id += 1;
        let id = format!("r{}", s.next_id);
        let req = Request {
            op: op.into(),
            id: id.clone(),
            payload,
        };
        let mut line = serde_json::to_string(&req).expect("request serializes");
        line.push('\n');
        s.stdin
            .write_all(line.as_bytes())
            .and_then(|_| s.stdin.flush())
            .map_err(|e| BackendError(format!("write to backend: {e}")))?;
        let mut buf = String::new();
        let n = s
            .stdout
            .read_line(&mut buf)
            .map_err(|e| BackendError(format!("read from backend: {e}")))?;
        if n == 0 {
            return Err(BackendError("backend closed its output".into()));
        }
        let resp: Response =
            serde_json::from_str(buf.trim_end()).map_err(|e| BackendError(format!("malformed response: {e}")))?;
        if resp.id.as_deref() != Some(id.as_str()) {
            return Err(BackendError(format!(
                "response id {:?} does not echo request id {id}",
                resp.id
            )));
        }
        if !resp.ok {
            return Err(BackendError(
                resp.error.unwrap_or_else(|| "unspecified backend error".into()),
            ));
        }
        Ok(resp.payload.unwrap_or(Value::Null))
    }

    fn desc(&self) -> BackendDescriptor {
        descriptor(
            &self.hello.name,
            &self.hello.version,
            self.hello.max_concurrent_sessions.max(1),
        )
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        if let Ok(s) = self.session.get_mut() {
            let _ = s.child.kill();
            let _ = s.child.wait();
        }
    }
}

fn path_str(p: &Path) -> String {
    std::path::absolute(p)
        .unwrap_or_else(|_| PathBuf::from(p))
        .display()
        .to_string()
}

impl DetectorBackend for ProcessBackend {
    fn descriptor(&self) -> BackendDescriptor {
        self.desc()
    }

    fn detect(&self, image: &ImageInput<'_>) -> Result<Vec<Detection>, BackendError> {
        self.supports("detect")?;
        let payload = serde_json::to_value(DetectPayload {
            image: path_str(image.path),
        })
        .expect("payload serializes");
        let result: DetectResult = serde_json::from_value(self.request("detect", payload)?)
            .map_err(|e| BackendError(format!("bad detect payload: {e}")))?;
        if let Some(d) = result.detections.iter().find(|d| !(0.0..=1.0).contains(&d.score)) {
            return Err(BackendError(format!("detection score {} outside [0, 1]", d.score)));
        }
        Ok(result.detections)
    }

    fn reads_pixels(&self) -> bool {
        true
    }
}

impl ClassifierBackend for ProcessBackend {
    fn descriptor(&self) -> BackendDescriptor {
        self.desc()
    }

    fn classify(&self, input: &CropInput<'_>) -> Result<Classification, BackendError> {
        self.supports("classify")?;
        let crop = input
            .crop_path
            .ok_or_else(|| BackendError("crop file missing for process classifier".into()))?;
        let payload = serde_json::to_value(ClassifyPayload { crop: path_str(crop) }).expect("payload serializes");
        let c: Classification = serde_json::from_value(self.request("classify", payload)?)
            .map_err(|e| BackendError(format!("bad classify payload: {e}")))?;
        if !(0.0..=1.0).contains(&c.score) {
            return Err(BackendError(format!("classifier score {} outside [0, 1]", c.score)));
        }
        Ok(c)
    }

    fn needs_crop_file(&self) -> bool {
        true
    }
}
