//! Minimal row-major rasters plus the instance label map used for occlusion
//! accounting.

use alloc::vec;
use alloc::vec::Vec;

use crate::annotation::PartId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid<T> {
    width: u32,
    height: u32,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: u32, height: u32, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }
}

impl<T> Grid<T> {
    /// Wraps row-major `data`; `None` if the length does not match.
    pub fn from_vec(width: u32, height: u32, data: Vec<T>) -> Option<Self> {
        (data.len() == width as usize * height as usize).then_some(Self { width, height, data })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> T) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> &T {
        &self.data[self.index(x, y)]
    }

    pub fn get_mut(&mut self, x: u32, y: u32) -> &mut T {
        let i = self.index(x, y);
        &mut self.data[i]
    }

    /// Signed lookup, `None` outside the grid.
    pub fn get_signed(&self, x: i64, y: i64) -> Option<&T> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        Some(self.get(x as u32, y as u32))
    }

    pub fn set(&mut self, x: u32, y: u32, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_size<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

pub type Rgba = [u8; 4];
pub type RgbaImage = Grid<Rgba>;

/// One pixel of an amodal instance map.
///
/// Visible and occluded cells optionally carry the semantic part they belong
/// to. Maps built from a plain binary mask have no part labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MaskCell {
    #[default]
    Background,
    Visible(Option<PartId>),
    Occluded(Option<PartId>),
}

impl MaskCell {
    /// Byte encoding used by mask files: 0 background, 1..=6 visible part,
    /// 101..=106 occluded part, 255 visible unlabeled, 100 occluded unlabeled.
    pub fn encode(self) -> u8 {
        match self {
            MaskCell::Background => 0,
            MaskCell::Visible(Some(p)) => 1 + p.index() as u8,
            MaskCell::Visible(None) => 255,
            MaskCell::Occluded(Some(p)) => 101 + p.index() as u8,
            MaskCell::Occluded(None) => 100,
        }
    }

    /// Inverse of [`MaskCell::encode`]. Values outside the scheme decode as
    /// unlabeled visible so that arbitrary nonzero binary masks are accepted.
    pub fn decode(v: u8) -> MaskCell {
        match v {
            0 => MaskCell::Background,
            1..=6 => MaskCell::Visible(PartId::from_index(v as usize - 1)),
            100 => MaskCell::Occluded(None),
            101..=106 => MaskCell::Occluded(PartId::from_index(v as usize - 101)),
            _ => MaskCell::Visible(None),
        }
    }

    pub fn is_instance(self) -> bool {
        !matches!(self, MaskCell::Background)
    }

    pub fn is_visible(self) -> bool {
        matches!(self, MaskCell::Visible(_))
    }

    pub fn part(self) -> Option<PartId> {
        match self {
            MaskCell::Background => None,
            MaskCell::Visible(p) | MaskCell::Occluded(p) => p,
        }
    }

    /// The cell after an occluder covers it.
    pub fn covered(self) -> MaskCell {
        match self {
            MaskCell::Visible(p) => MaskCell::Occluded(p),
            other => other,
        }
    }
}

pub type InstanceMap = Grid<MaskCell>;

impl InstanceMap {
    /// Whether any instance cell carries a part label.
    pub fn has_part_labels(&self) -> bool {
        self.as_slice().iter().any(|c| c.part().is_some())
    }

    /// Tight pixel bounds `[x0, x1) × [y0, y1)` of all instance cells.
    pub fn instance_bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bounds: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height() {
            for x in 0..self.width() {
                if self.get(x, y).is_instance() {
                    bounds = Some(match bounds {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        bounds
    }

    pub fn instance_pixel_count(&self) -> usize {
        self.as_slice().iter().filter(|c| c.is_instance()).count()
    }

    pub fn occluded_pixel_count(&self) -> usize {
        self.as_slice()
            .iter()
            .filter(|c| matches!(c, MaskCell::Occluded(_)))
            .count()
    }
}

/// Binary alpha coverage used for occlusion accounting: alpha at or above
/// half intensity counts as opaque.
pub fn alpha_is_opaque(alpha: u8) -> bool {
    alpha >= 128
}

/// Source-over blend of `top` onto `bottom` with `top`'s alpha.
pub fn blend(bottom: Rgba, top: Rgba) -> Rgba {
    let a = top[3] as u32;
    let mut out = [0u8; 4];
    for c in 0..3 {
        out[c] = ((top[c] as u32 * a + bottom[c] as u32 * (255 - a) + 127) / 255) as u8;
    }
    out[3] = (a + bottom[3] as u32 * (255 - a) / 255).min(255) as u8;
    out
}
