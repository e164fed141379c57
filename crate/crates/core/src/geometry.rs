//! Axis-aligned box arithmetic: candidate expansion, the aspect-ratio gate,
//! clipping, IoU and integer crop regions.
//!
//! Boxes live in continuous pixel coordinates. Coordinates may be negative or
//! overflow the image until [`clip_to_image`] is applied; rounding to whole
//! pixels only happens in [`crop_region`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("box dimensions must be finite with positive width and height")]
    InvalidBox,
    #[error("box does not overlap the image")]
    NoOverlap,
    #[error("crop rounds to an empty pixel region")]
    DegenerateCrop,
    #[error("invalid expansion config: {0}")]
    InvalidConfig(&'static str),
}

/// Pixel rectangle `(x, y, w, h)` with `x, y` the top-left corner.
///
/// Serialized as the array `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::InvalidBox);
        }
        Ok(Self { x, y, w, h })
    }

    /// Box from corner coordinates `[x0, x1) × [y0, y1)`.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        (self.right() - self.x) * (self.bottom() - self.y)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Whether the box lies inside `[0, width] × [0, height]`.
    pub fn is_within(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= width && self.bottom() <= height
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// Parameters of the occlusion-aware expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    /// A box is gated as likely occluded when `h < aspect_gate_threshold * w`.
    pub aspect_gate_threshold: f64,
    /// Fraction of `h` added below a non-gated box.
    pub k_upright: f64,
    /// Fraction of `h` added below a gated box.
    pub k_occluded: f64,
    /// Width multiplier of the expanded box.
    pub lateral_factor: f64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            aspect_gate_threshold: 2.5,
            k_upright: 0.25,
            k_occluded: 0.75,
            lateral_factor: 3.0,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let all_finite = [
            self.aspect_gate_threshold,
            self.k_upright,
            self.k_occluded,
            self.lateral_factor,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(GeometryError::InvalidConfig("values must be finite"));
        }
        if self.aspect_gate_threshold <= 0.0 {
            return Err(GeometryError::InvalidConfig("aspect_gate_threshold must be > 0"));
        }
        if self.k_upright < 0.0 {
            return Err(GeometryError::InvalidConfig("k_upright must be >= 0"));
        }
        if self.k_occluded <= self.k_upright {
            return Err(GeometryError::InvalidConfig("k_occluded must exceed k_upright"));
        }
        if self.lateral_factor < 1.0 {
            return Err(GeometryError::InvalidConfig("lateral_factor must be >= 1"));
        }
        Ok(())
    }
}

/// Fixed three-sided expansion `(x - w, y, 3w, h + h/4)`.
pub fn expand_baseline(b: BBox) -> BBox {
    BBox {
        x: b.x - b.w,
        y: b.y,
        w: 3.0 * b.w,
        h: b.h + b.h / 4.0,
    }
}

/// True when the box is squat enough (`h < threshold * w`, strict) to be
/// treated as a likely occluded person.
pub fn aspect_gate(b: BBox, cfg: &ExpansionConfig) -> bool {
    b.h < cfg.aspect_gate_threshold * b.w
}

/// Expansion whose downward growth depends on the aspect gate.
///
/// With the default config a non-gated box expands bit-identically to
/// [`expand_baseline`].
pub fn expand_occlusion_aware(b: BBox, cfg: &ExpansionConfig) -> BBox {
    let k = if aspect_gate(b, cfg) {
        cfg.k_occluded
    } else {
        cfg.k_upright
    };
    BBox {
        x: b.x - b.w,
        y: b.y,
        w: cfg.lateral_factor * b.w,
        h: b.h + k * b.h,
    }
}

/// Intersection of `b` with `[0, width] × [0, height]`.
pub fn clip_to_image(b: BBox, width: f64, height: f64) -> Result<BBox, GeometryError> {
    if b.is_within(width, height) {
        return Ok(b);
    }
    let x0 = b.x.max(0.0);
    let y0 = b.y.max(0.0);
    let x1 = b.right().min(width);
    let y1 = b.bottom().min(height);
    if x1 <= x0 || y1 <= y0 {
        return Err(GeometryError::NoOverlap);
    }
    Ok(BBox {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
    })
}

/// Intersection area of two boxes, 0 when disjoint.
pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        0.0
    } else {
        iw * ih
    }
}

/// Intersection over union in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Integer pixel region `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }
}

/// Round half away from zero.
pub fn round_half_away(v: f64) -> f64 {
    libm::round(v)
}

/// Integer crop bounds for a box already clipped to a `width × height` image.
/// Every edge is rounded half away from zero, then clamped to the image.
pub fn crop_region(b: &BBox, width: u32, height: u32) -> Result<PixelRect, GeometryError> {
    let clamp = |v: f64, hi: u32| -> u32 { round_half_away(v).clamp(0.0, hi as f64) as u32 };
    let rect = PixelRect {
        x0: clamp(b.x, width),
        y0: clamp(b.y, height),
        x1: clamp(b.right(), width),
        y1: clamp(b.bottom(), height),
    };
    if rect.x1 <= rect.x0 || rect.y1 <= rect.y0 {
        return Err(GeometryError::DegenerateCrop);
    }
    Ok(rect)
}
