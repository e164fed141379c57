//! Occluder superimposition: compositing, placement search toward a target
//! occlusion decile, and deterministic dataset assembly.
//!
//! Occlusion accounting uses binary alpha (opaque when alpha >= 128) so that
//! pixel-count checks stay exact; colour blending uses the full alpha.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    assign_parts_by_keypoints, bin_of, infer_part_visibility, occlusion_level, part_visibility_from_map,
    AnnotationError, Keypoint, OcclusionBin, PartId, PartVisibility, PartWeightTable, Skeleton, Visibility,
    VisibilityMode,
};
use crate::geometry::BBox;
use crate::model::{ClassLabel, DatasetManifest, GroundTruthInstance, ImageRef, SynthesisRecord};
use crate::raster::{alpha_is_opaque, blend, Grid, InstanceMap, MaskCell, Rgba, RgbaImage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("occluder placement does not overlap the image")]
    NoOverlap,
    #[error("no placement reached the target band within {attempts} attempts")]
    Infeasible { attempts: u32 },
    #[error("quotas unmet: {}", format_shortfalls(.0))]
    QuotaUnmet(Vec<Shortfall>),
    #[error("invalid base instance: {0}")]
    InvalidBase(&'static str),
    #[error("invalid occluder: {0}")]
    InvalidOccluder(&'static str),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub bin: u8,
    pub requested: u32,
    pub produced: u32,
}

fn format_shortfalls(s: &[Shortfall]) -> String {
    let parts: Vec<String> = s
        .iter()
        .map(|s| format!("bin {} produced {}/{}", s.bin, s.produced, s.requested))
        .collect();
    parts.join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderCategory {
    Vehicle,
    StreetFurniture,
    Person,
    Other,
}

/// RGBA cutout; the alpha channel doubles as the occluder mask.
#[derive(Debug, Clone, PartialEq)]
pub struct OccluderAsset {
    id: String,
    category: OccluderCategory,
    image: RgbaImage,
}

impl OccluderAsset {
    pub fn new(id: impl Into<String>, category: OccluderCategory, image: RgbaImage) -> Result<Self, SynthesisError> {
        if image.width() == 0 || image.height() == 0 {
            return Err(SynthesisError::InvalidOccluder("empty image"));
        }
        if !image.as_slice().iter().any(|p| alpha_is_opaque(p[3])) {
            return Err(SynthesisError::InvalidOccluder("alpha mask has no opaque pixel"));
        }
        Ok(Self {
            id: id.into(),
            category,
            image,
        })
    }

    /// Solid rectangle occluder.
    pub fn rectangle(
        id: impl Into<String>,
        category: OccluderCategory,
        width: u32,
        height: u32,
        color: [u8; 3],
    ) -> Result<Self, SynthesisError> {
        let px = [color[0], color[1], color[2], 255];
        Self::new(id, category, Grid::filled(width, height, px))
    }

    /// Solid ellipse inscribed in a `width × height` cutout.
    pub fn ellipse(
        id: impl Into<String>,
        category: OccluderCategory,
        width: u32,
        height: u32,
        color: [u8; 3],
    ) -> Result<Self, SynthesisError> {
        let (rx, ry) = (width as f64 / 2.0, height as f64 / 2.0);
        let img = Grid::from_fn(width, height, |x, y| {
            let dx = (x as f64 + 0.5 - rx) / rx;
            let dy = (y as f64 + 0.5 - ry) / ry;
            let a = if dx * dx + dy * dy <= 1.0 { 255 } else { 0 };
            [color[0], color[1], color[2], a]
        });
        Self::new(id, category, img)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn category(&self) -> OccluderCategory {
        self.category
    }

    pub fn image(&self) -> &RgbaImage {
        &self.image
    }

    pub fn mask(&self) -> Grid<bool> {
        self.image.map(|p| alpha_is_opaque(p[3]))
    }
}

/// Occluder top-left corner in target pixels plus a nearest-neighbour scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub x: i64,
    pub y: i64,
    pub scale: f64,
}

/// Occluder resampled at a given scale.
#[derive(Debug, Clone)]
struct ScaledOccluder {
    pixels: RgbaImage,
}

impl ScaledOccluder {
    fn new(occ: &OccluderAsset, scale: f64) -> Self {
        let (w, h) = (occ.image.width(), occ.image.height());
        let sw = (libm::ceil(w as f64 * scale) as u32).max(1);
        let sh = (libm::ceil(h as f64 * scale) as u32).max(1);
        let pixels = Grid::from_fn(sw, sh, |x, y| {
            let sx = ((libm::floor((x as f64 + 0.5) / scale)) as u32).min(w - 1);
            let sy = ((libm::floor((y as f64 + 0.5) / scale)) as u32).min(h - 1);
            *occ.image.get(sx, sy)
        });
        Self { pixels }
    }

    fn width(&self) -> u32 {
        self.pixels.width()
    }

    fn height(&self) -> u32 {
        self.pixels.height()
    }

    fn overlaps(&self, x: i64, y: i64, img_w: u32, img_h: u32) -> bool {
        x < img_w as i64 && y < img_h as i64 && x + self.width() as i64 > 0 && y + self.height() as i64 > 0
    }
}

/// An unoccluded instance ready to receive occluders.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseInstance {
    pub id: String,
    pub label: ClassLabel,
    pub image: RgbaImage,
    /// Amodal, part-labelled instance map.
    pub map: InstanceMap,
    pub keypoints: Vec<Keypoint>,
}

impl BaseInstance {
    pub fn new(
        id: impl Into<String>,
        label: ClassLabel,
        image: RgbaImage,
        map: InstanceMap,
        keypoints: Vec<Keypoint>,
    ) -> Result<Self, SynthesisError> {
        if !image.same_size(&map) {
            return Err(SynthesisError::InvalidBase("image and instance map sizes differ"));
        }
        if !map.has_part_labels() {
            return Err(SynthesisError::InvalidBase("instance map carries no part labels"));
        }
        Ok(Self {
            id: id.into(),
            label,
            image,
            map,
            keypoints,
        })
    }

    /// Base from a photograph plus binary instance mask; parts are assigned
    /// by nearest labeled keypoint.
    pub fn from_mask(
        id: impl Into<String>,
        label: ClassLabel,
        image: RgbaImage,
        mask: &Grid<bool>,
        keypoints: Vec<Keypoint>,
        skeleton: &Skeleton,
    ) -> Result<Self, SynthesisError> {
        if !image.same_size(mask) {
            return Err(SynthesisError::InvalidBase("image and mask sizes differ"));
        }
        if keypoints.len() != skeleton.keypoint_count() {
            return Err(SynthesisError::InvalidBase("keypoints do not match the skeleton"));
        }
        let map = assign_parts_by_keypoints(mask, &keypoints, skeleton);
        Self::new(id, label, image, map, keypoints)
    }

    /// Amodal instance box.
    pub fn bbox(&self) -> BBox {
        let (x0, y0, x1, y1) = self.map.instance_bounds().expect("part-labelled map is non-empty");
        BBox::from_corners(x0 as f64, y0 as f64, x1 as f64, y1 as f64).expect("non-empty bounds")
    }

    fn unmodified(&self) -> Composed {
        Composed {
            image: self.image.clone(),
            map: self.map.clone(),
            keypoints: self.keypoints.clone(),
        }
    }
}

/// A base instance after superimposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Composed {
    pub image: RgbaImage,
    pub map: InstanceMap,
    pub keypoints: Vec<Keypoint>,
}

/// How visibility inputs are turned into an occlusion level.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationContext {
    pub weights: PartWeightTable,
    pub mode: VisibilityMode,
    pub skeleton: Skeleton,
}

impl Default for AnnotationContext {
    fn default() -> Self {
        Self {
            weights: PartWeightTable::toolkit_default(),
            mode: VisibilityMode::Fractional,
            skeleton: Skeleton::coco17(),
        }
    }
}

impl AnnotationContext {
    /// Occlusion level of an instance given its map and keypoints. Part
    /// labelled maps are measured per pixel; otherwise keypoints are counted
    /// with the map as confirmation mask.
    pub fn occlusion_of(&self, map: &InstanceMap, keypoints: &[Keypoint]) -> Result<f64, AnnotationError> {
        let mut parts = if map.has_part_labels() {
            part_visibility_from_map(map)
        } else {
            infer_part_visibility(keypoints, &self.skeleton, Some(map))?
        };
        self.level(&mut parts)
    }

    fn level(&self, parts: &mut [PartVisibility]) -> Result<f64, AnnotationError> {
        self.mode.apply(parts);
        occlusion_level(parts, &self.weights)
    }
}

/// Superimposes `occ` at `p` over `base`.
///
/// Pixels with non-zero occluder alpha are blended; instance cells and
/// visible keypoints under opaque occluder pixels become occluded.
pub fn composite(base: &BaseInstance, occ: &OccluderAsset, p: Placement) -> Result<Composed, SynthesisError> {
    if !(p.scale.is_finite() && p.scale > 0.0) {
        return Err(SynthesisError::InvalidOccluder("scale must be positive"));
    }
    composite_scaled(base, &ScaledOccluder::new(occ, p.scale), p.x, p.y)
}

fn composite_scaled(base: &BaseInstance, occ: &ScaledOccluder, ox: i64, oy: i64) -> Result<Composed, SynthesisError> {
    let (w, h) = (base.image.width(), base.image.height());
    if !occ.overlaps(ox, oy, w, h) {
        return Err(SynthesisError::NoOverlap);
    }
    let mut out = base.unmodified();
    let x0 = ox.max(0) as u32;
    let y0 = oy.max(0) as u32;
    let x1 = (ox + occ.width() as i64).min(w as i64) as u32;
    let y1 = (oy + occ.height() as i64).min(h as i64) as u32;
    for y in y0..y1 {
        for x in x0..x1 {
            let src = *occ.pixels.get((x as i64 - ox) as u32, (y as i64 - oy) as u32);
            if src[3] == 0 {
                continue;
            }
            let px = out.image.get_mut(x, y);
            *px = blend(*px, src);
            if alpha_is_opaque(src[3]) {
                let cell = out.map.get_mut(x, y);
                *cell = cell.covered();
            }
        }
    }
    for k in out.keypoints.iter_mut() {
        if k.v != Visibility::LabeledVisible {
            continue;
        }
        let (kx, ky) = k.pixel();
        let (sx, sy) = (kx - ox, ky - oy);
        if sx >= 0 && sy >= 0 && sx < occ.width() as i64 && sy < occ.height() as i64 {
            let a = occ.pixels.get(sx as u32, sy as u32)[3];
            if alpha_is_opaque(a) {
                k.v = Visibility::LabeledOccluded;
            }
        }
    }
    Ok(out)
}

/// Occlusion level achieved by a composition.
pub fn achieved_occlusion(composed: &Composed, ctx: &AnnotationContext) -> Result<f64, AnnotationError> {
    ctx.occlusion_of(&composed.map, &composed.keypoints)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SearchPolicy {
    /// Occluder rises from below the instance; searched over its vertical
    /// offset.
    #[default]
    #[serde(rename = "grid-bisect-vertical")]
    GridBisectVertical,
    /// Occluder slides in from the left or right; searched over its
    /// horizontal offset.
    #[serde(rename = "grid-bisect-horizontal")]
    GridBisectHorizontal,
}

impl SearchPolicy {
    pub fn id(self) -> &'static str {
        match self {
            SearchPolicy::GridBisectVertical => "grid-bisect-vertical",
            SearchPolicy::GridBisectHorizontal => "grid-bisect-horizontal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthesisSpec {
    pub target_bin: OcclusionBin,
    pub seed: u64,
    pub max_attempts: u32,
    pub policy: SearchPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementSolution {
    pub placement: Placement,
    pub achieved: f64,
    pub attempts: u32,
}

/// Scale multipliers tried per attempt, relative to the scale at which the
/// occluder just spans the instance in both dimensions.
const SCALE_FACTORS: [f64; 5] = [1.0, 1.25, 1.5, 2.0, 0.75];
const GRID_STEPS: i64 = 16;

/// Per-part cell counts of a base map, used to score placements without
/// building the full composite.
struct CoverageModel<'a> {
    base: &'a BaseInstance,
    ctx: &'a AnnotationContext,
    visible: [usize; 6],
    total: [usize; 6],
    bounds: (u32, u32, u32, u32),
}

impl<'a> CoverageModel<'a> {
    fn new(base: &'a BaseInstance, ctx: &'a AnnotationContext) -> Self {
        let mut visible = [0; 6];
        let mut total = [0; 6];
        for cell in base.map.as_slice() {
            if let Some(p) = cell.part() {
                total[p.index()] += 1;
                if cell.is_visible() {
                    visible[p.index()] += 1;
                }
            }
        }
        Self {
            base,
            ctx,
            visible,
            total,
            bounds: base.map.instance_bounds().expect("part-labelled map is non-empty"),
        }
    }

    /// Same value as `achieved_occlusion(composite(..))` for this placement.
    fn occlusion_at(&self, occ: &ScaledOccluder, ox: i64, oy: i64) -> Result<f64, AnnotationError> {
        let (bx0, by0, bx1, by1) = self.bounds;
        let x0 = ox.max(bx0 as i64);
        let y0 = oy.max(by0 as i64);
        let x1 = (ox + occ.width() as i64).min(bx1 as i64);
        let y1 = (oy + occ.height() as i64).min(by1 as i64);
        let mut covered = [0usize; 6];
        for y in y0..y1 {
            for x in x0..x1 {
                let a = occ.pixels.get((x - ox) as u32, (y - oy) as u32)[3];
                if !alpha_is_opaque(a) {
                    continue;
                }
                if let MaskCell::Visible(Some(p)) = self.base.map.get(x as u32, y as u32) {
                    covered[p.index()] += 1;
                }
            }
        }
        let mut parts: Vec<PartVisibility> = PartId::ALL
            .iter()
            .map(|&part| {
                let i = part.index();
                let visible_fraction = if self.total[i] == 0 {
                    0.0
                } else {
                    (self.visible[i] - covered[i]) as f64 / self.total[i] as f64
                };
                PartVisibility { part, visible_fraction }
            })
            .collect();
        self.ctx.level(&mut parts)
    }
}

/// Searches for a placement whose achieved occlusion falls in the target
/// decile.
///
/// Each attempt draws a seeded jitter for the off-axis position, then for
/// each of five scales scans a coarse grid along the search axis and bisects
/// the bracket around the band centre. The search is fully determined by
/// the inputs and `spec.seed`.
pub fn solve_placement(
    base: &BaseInstance,
    occ: &OccluderAsset,
    spec: &SynthesisSpec,
    ctx: &AnnotationContext,
) -> Result<PlacementSolution, SynthesisError> {
    if spec.max_attempts == 0 {
        return Err(SynthesisError::Infeasible { attempts: 0 });
    }
    let model = CoverageModel::new(base, ctx);
    let (bx0, by0, bx1, by1) = model.bounds;
    let (iw, ih) = ((bx1 - bx0) as f64, (by1 - by0) as f64);
    let (img_w, img_h) = (base.image.width() as i64, base.image.height() as i64);
    let fit = (iw / occ.image.width() as f64).max(ih / occ.image.height() as f64);
    let scaled: Vec<(f64, ScaledOccluder)> = SCALE_FACTORS
        .iter()
        .map(|f| {
            let s = fit * f;
            (s, ScaledOccluder::new(occ, s))
        })
        .collect();

    let band = spec.target_bin;
    let target = band.lower() + 5.0;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    for attempt in 1..=spec.max_attempts {
        let jitter: f64 = rng.random();
        let from_left: bool = rng.random();
        for (scale, so) in &scaled {
            let (sw, sh) = (so.width() as i64, so.height() as i64);
            // The search coordinate t moves the top-left corner from `origin`
            // along `step`; t = 0 leaves the instance uncovered, t = span
            // covers it most.
            let (span, origin, step) = match spec.policy {
                SearchPolicy::GridBisectVertical => {
                    let x = libm::floor(bx0 as f64 + jitter * iw - sw as f64 / 2.0) as i64;
                    let start = (by1 as i64).min(img_h - 1);
                    let end = by1 as i64 - sh;
                    (start - end, (x, start), (0, -1))
                }
                SearchPolicy::GridBisectHorizontal => {
                    let y = libm::floor(by0 as f64 + jitter * ih - sh as f64 / 2.0) as i64;
                    if from_left {
                        let start = (bx0 as i64 - sw).max(1 - sw);
                        let end = bx1 as i64 - sw;
                        (end - start, (start, y), (1, 0))
                    } else {
                        let start = (bx1 as i64).min(img_w - 1);
                        let end = bx0 as i64;
                        (start - end, (start, y), (-1, 0))
                    }
                }
            };
            let place = |t: i64| (origin.0 + step.0 * t, origin.1 + step.1 * t);
            if span < 0 {
                continue;
            }
            let eval = |t: i64| -> Result<Option<f64>, SynthesisError> {
                let (x, y) = place(t);
                if !so.overlaps(x, y, img_w as u32, img_h as u32) {
                    return Ok(None);
                }
                Ok(Some(model.occlusion_at(so, x, y)?))
            };
            let done = |t: i64, achieved: f64| {
                let (x, y) = place(t);
                PlacementSolution {
                    placement: Placement { x, y, scale: *scale },
                    achieved,
                    attempts: attempt,
                }
            };

            let mut grid: Vec<(i64, f64)> = Vec::with_capacity(GRID_STEPS as usize);
            for i in 0..GRID_STEPS {
                let t = span * i / (GRID_STEPS - 1);
                if grid.last().is_some_and(|&(prev, _)| prev == t) {
                    continue;
                }
                if let Some(v) = eval(t)? {
                    grid.push((t, v));
                }
            }
            let first_over = grid.iter().position(|&(_, v)| v >= target);
            match first_over {
                Some(i) => {
                    let (t_hi, v_hi) = grid[i];
                    if band.contains(v_hi) {
                        return Ok(done(t_hi, v_hi));
                    }
                    if i == 0 {
                        continue;
                    }
                    let (t_lo, v_lo) = grid[i - 1];
                    if band.contains(v_lo) {
                        return Ok(done(t_lo, v_lo));
                    }
                    // v(t_lo) < target <= v(t_hi), neither in band
                    let (mut lo, mut hi) = (t_lo, t_hi);
                    while hi - lo > 1 {
                        let mid = lo + (hi - lo) / 2;
                        let Some(v) = eval(mid)? else { break };
                        if band.contains(v) {
                            return Ok(done(mid, v));
                        }
                        if v < target {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                }
                None => {
                    let best = grid
                        .iter()
                        .filter(|(_, v)| band.contains(*v))
                        .max_by(|a, b| a.1.total_cmp(&b.1));
                    if let Some(&(t, v)) = best {
                        return Ok(done(t, v));
                    }
                }
            }
        }
    }
    Err(SynthesisError::Infeasible {
        attempts: spec.max_attempts,
    })
}

/// Per-bin instance counts plus search settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisPlan {
    pub quotas: [u32; 10],
    pub seed: u64,
    #[serde(default)]
    pub policy: SearchPolicy,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    /// Fresh seeds tried per slot before the slot counts as a shortfall.
    #[serde(default = "default_slot_retries")]
    pub slot_retries: u32,
}

fn default_max_attempts() -> u32 {
    16
}

fn default_slot_retries() -> u32 {
    4
}

impl SynthesisPlan {
    pub fn new(quotas: [u32; 10], seed: u64) -> Self {
        Self {
            quotas,
            seed,
            policy: SearchPolicy::default(),
            max_attempts: default_max_attempts(),
            slot_retries: default_slot_retries(),
        }
    }

    /// All `(bin, index)` slots in output order.
    pub fn slots(&self) -> impl Iterator<Item = (OcclusionBin, u32)> + '_ {
        OcclusionBin::all().flat_map(move |b| (0..self.quotas[b.index()]).map(move |i| (b, i)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedInstance {
    pub id: String,
    pub base_id: String,
    pub label: ClassLabel,
    pub occluder_id: Option<String>,
    pub placement: Option<Placement>,
    pub seed: u64,
    pub target_bin: OcclusionBin,
    pub policy: SearchPolicy,
    pub achieved: f64,
    pub bbox: BBox,
    pub composed: Composed,
}

impl SynthesizedInstance {
    pub fn image_path(&self) -> String {
        format!("images/{}.png", self.id)
    }

    pub fn mask_path(&self) -> String {
        format!("masks/{}.png", self.id)
    }

    pub fn to_ground_truth(&self) -> GroundTruthInstance {
        let bin = bin_of(self.achieved).expect("achieved level lies in its band");
        let provenance = match (&self.occluder_id, &self.placement) {
            (Some(o), Some(p)) => format!(
                "synthetic: base={} occluder={} placement=({}, {}, {}) seed={} policy={}",
                self.base_id,
                o,
                p.x,
                p.y,
                p.scale,
                self.seed,
                self.policy.id()
            ),
            _ => format!("synthetic: base={} unmodified seed={}", self.base_id, self.seed),
        };
        GroundTruthInstance {
            id: self.id.clone(),
            image: ImageRef {
                path: self.image_path(),
                width: self.composed.image.width(),
                height: self.composed.image.height(),
            },
            bbox: self.bbox,
            label: self.label,
            keypoints: self.composed.keypoints.clone(),
            mask_path: Some(self.mask_path()),
            occlusion_pct: self.achieved,
            occlusion_bin: bin.index() as u8,
            provenance,
            manual_override: false,
            synthesis: Some(SynthesisRecord {
                base_id: self.base_id.clone(),
                occluder_id: self.occluder_id.clone(),
                placement: self.placement,
                seed: self.seed,
                target_bin: self.target_bin.index() as u8,
                policy: String::from(self.policy.id()),
            }),
        }
    }
}

/// SplitMix64 finaliser, used to derive independent per-slot seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn slot_id(bin: OcclusionBin, index: u32) -> String {
    format!("syn-b{}-{:05}", bin.index(), index)
}

/// Builds one slot of a plan. Returns `None` if no retry reached the band.
///
/// Slots are independent, so callers may build them in any order or in
/// parallel and still obtain identical instances.
pub fn synthesize_slot(
    bases: &[BaseInstance],
    occluders: &[OccluderAsset],
    plan: &SynthesisPlan,
    bin: OcclusionBin,
    index: u32,
    ctx: &AnnotationContext,
) -> Result<Option<SynthesizedInstance>, SynthesisError> {
    if bases.is_empty() {
        return Ok(None);
    }
    let slot_seed = mix_seed(plan.seed, ((bin.index() as u64) << 32) | index as u64);
    for retry in 0..plan.slot_retries.max(1) {
        let seed = mix_seed(slot_seed, retry as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = &bases[rng.random_range(0..bases.len())];
        let make = |occluder_id: Option<String>, placement, composed: Composed, achieved| SynthesizedInstance {
            id: slot_id(bin, index),
            base_id: base.id.clone(),
            label: base.label,
            occluder_id,
            placement,
            seed,
            target_bin: bin,
            policy: plan.policy,
            achieved,
            bbox: base.bbox(),
            composed,
        };
        if occluders.is_empty() {
            let composed = base.unmodified();
            let achieved = achieved_occlusion(&composed, ctx)?;
            if bin.contains(achieved) {
                return Ok(Some(make(None, None, composed, achieved)));
            }
            continue;
        }
        let first = rng.random_range(0..occluders.len());
        for k in 0..occluders.len() {
            let occ = &occluders[(first + k) % occluders.len()];
            let spec = SynthesisSpec {
                target_bin: bin,
                seed: mix_seed(seed, k as u64 + 1),
                max_attempts: plan.max_attempts,
                policy: plan.policy,
            };
            match solve_placement(base, occ, &spec, ctx) {
                Ok(sol) => {
                    let composed = composite(base, occ, sol.placement)?;
                    let achieved = achieved_occlusion(&composed, ctx)?;
                    debug_assert_eq!(achieved, sol.achieved);
                    return Ok(Some(make(
                        Some(occ.id.clone()),
                        Some(sol.placement),
                        composed,
                        achieved,
                    )));
                }
                Err(SynthesisError::Infeasible { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(None)
}

/// Fills every slot of `plan` sequentially, in id order.
pub fn synthesize_dataset(
    bases: &[BaseInstance],
    occluders: &[OccluderAsset],
    plan: &SynthesisPlan,
    ctx: &AnnotationContext,
) -> Result<Vec<SynthesizedInstance>, SynthesisError> {
    let mut out = Vec::new();
    for (bin, index) in plan.slots() {
        out.push(synthesize_slot(bases, occluders, plan, bin, index, ctx)?);
    }
    collect_slots(plan, out)
}

/// Checks quotas over slot results (in [`SynthesisPlan::slots`] order).
pub fn collect_slots(
    plan: &SynthesisPlan,
    slots: Vec<Option<SynthesizedInstance>>,
) -> Result<Vec<SynthesizedInstance>, SynthesisError> {
    let mut produced = [0u32; 10];
    let mut out = Vec::with_capacity(slots.len());
    for (inst, (bin, _)) in slots.into_iter().zip(plan.slots()) {
        if let Some(inst) = inst {
            produced[bin.index()] += 1;
            out.push(inst);
        }
    }
    let shortfalls: Vec<Shortfall> = (0..10)
        .filter(|&b| produced[b] < plan.quotas[b])
        .map(|b| Shortfall {
            bin: b as u8,
            requested: plan.quotas[b],
            produced: produced[b],
        })
        .collect();
    if !shortfalls.is_empty() {
        return Err(SynthesisError::QuotaUnmet(shortfalls));
    }
    Ok(out)
}

pub fn build_manifest(instances: &[SynthesizedInstance]) -> DatasetManifest {
    let mut gt: Vec<GroundTruthInstance> = instances.iter().map(|i| i.to_ground_truth()).collect();
    gt.sort_by(|a, b| a.id.cmp(&b.id));
    DatasetManifest::new(gt)
}

/// Rectangles of a uniform-layout figure, as `[x0, y0, x1, y1)` per part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FigureLayout {
    pub parts: [(u32, u32, u32, u32); 6],
}

/// Synthetic person made of one rectangle per semantic part, with each part's
/// pixel area proportional to its weight (exactly so for integer weights).
///
/// Rows: head (30u), torso with arms alongside (40u), legs (40u), using
/// 40u² pixels per weight point. `unit` scales the whole figure; `margin`
/// pads every side of the canvas.
pub fn uniform_figure(
    id: impl Into<String>,
    label: ClassLabel,
    weights: &PartWeightTable,
    unit: u32,
    margin: u32,
) -> Result<BaseInstance, SynthesisError> {
    if unit == 0 {
        return Err(SynthesisError::InvalidBase("unit must be positive"));
    }
    let u = unit as f64;
    let (rh, rt, rl) = (30 * unit, 40 * unit, 40 * unit);
    let px_per_weight = 40.0 * u * u;
    let width_for = |p: PartId, rows: u32| libm::round(weights.weight(p) * px_per_weight / rows as f64) as u32;
    let w_head = width_for(PartId::Head, rh);
    let w_torso = width_for(PartId::Torso, rt);
    let w_larm = width_for(PartId::LeftArm, rt);
    let w_rarm = width_for(PartId::RightArm, rt);
    let w_lleg = width_for(PartId::LeftLeg, rl);
    let w_rleg = width_for(PartId::RightLeg, rl);

    let body_w = (w_larm + w_torso + w_rarm).max(2 * w_lleg.max(w_rleg)).max(w_head);
    let canvas_w = body_w + 2 * margin;
    let canvas_h = rh + rt + rl + 2 * margin;
    let left = margin + (body_w - (w_larm + w_torso + w_rarm)) / 2;
    let torso_x0 = left + w_larm;
    let cx = torso_x0 + w_torso / 2;
    let top = margin;

    // the person faces the camera, so the left arm and leg are on the image right
    let layout = FigureLayout {
        parts: [
            (cx - w_head / 2, top, cx - w_head / 2 + w_head, top + rh),
            (torso_x0, top + rh, torso_x0 + w_torso, top + rh + rt),
            (torso_x0 + w_torso, top + rh, torso_x0 + w_torso + w_larm, top + rh + rt),
            (left, top + rh, left + w_rarm, top + rh + rt),
            (cx, top + rh + rt, cx + w_lleg, top + rh + rt + rl),
            (cx - w_rleg, top + rh + rt, cx, top + rh + rt + rl),
        ],
    };

    const COLORS: [Rgba; 6] = [
        [224, 172, 105, 255],
        [40, 90, 180, 255],
        [60, 120, 200, 255],
        [60, 120, 200, 255],
        [50, 50, 60, 255],
        [50, 50, 60, 255],
    ];
    let mut image = Grid::filled(canvas_w, canvas_h, [128, 128, 128, 255]);
    let mut map = Grid::filled(canvas_w, canvas_h, MaskCell::Background);
    for part in PartId::ALL {
        let (x0, y0, x1, y1) = layout.parts[part.index()];
        for y in y0..y1 {
            for x in x0..x1 {
                image.set(x, y, COLORS[part.index()]);
                map.set(x, y, MaskCell::Visible(Some(part)));
            }
        }
    }

    let rect = |p: PartId| {
        let (x0, y0, x1, y1) = layout.parts[p.index()];
        (x0 as f64, y0 as f64, x1 as f64, y1 as f64)
    };
    let at = |p: PartId, fx: f64, fy: f64| {
        let (x0, y0, x1, y1) = rect(p);
        let x = libm::floor(x0 + fx * (x1 - x0)).clamp(x0, (x1 - 1.0).max(x0)) + 0.5;
        let y = libm::floor(y0 + fy * (y1 - y0)).clamp(y0, (y1 - 1.0).max(y0)) + 0.5;
        Keypoint::new(x, y, Visibility::LabeledVisible)
    };
    use PartId::*;
    let keypoints = alloc::vec![
        at(Head, 0.5, 0.6),
        at(Head, 0.65, 0.4),
        at(Head, 0.35, 0.4),
        at(Head, 0.9, 0.5),
        at(Head, 0.1, 0.5),
        at(Torso, 0.9, 0.1),
        at(Torso, 0.1, 0.1),
        at(LeftArm, 0.5, 0.35),
        at(RightArm, 0.5, 0.35),
        at(LeftArm, 0.5, 0.85),
        at(RightArm, 0.5, 0.85),
        at(Torso, 0.8, 0.9),
        at(Torso, 0.2, 0.9),
        at(LeftLeg, 0.5, 0.45),
        at(RightLeg, 0.5, 0.45),
        at(LeftLeg, 0.5, 0.9),
        at(RightLeg, 0.5, 0.9),
    ];
    BaseInstance::new(id, label, image, map, keypoints)
}
