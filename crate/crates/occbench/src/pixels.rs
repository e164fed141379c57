//! PNG reading and writing, instance-map encoding and cropping.

use std::path::Path;

use image::{GrayImage, ImageReader, Luma};
use thiserror::Error;

use occbench_core::geometry::{crop_region, BBox, GeometryError};
use occbench_core::raster::{Grid, InstanceMap, MaskCell, RgbaImage};

#[derive(Debug, Error)]
pub enum PixelError {
    #[error("cannot decode {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

fn unreadable(path: &Path, e: impl ToString) -> PixelError {
    PixelError::Unreadable {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_err(path: &Path, e: impl ToString) -> PixelError {
    PixelError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn decode(path: &Path) -> Result<image::DynamicImage, PixelError> {
    ImageReader::open(path)
        .map_err(|e| unreadable(path, e))?
        .with_guessed_format()
        .map_err(|e| unreadable(path, e))?
        .decode()
        .map_err(|e| unreadable(path, e))
}

/// Width and height from the file header.
pub fn dimensions(path: &Path) -> Result<(u32, u32), PixelError> {
    image::image_dimensions(path).map_err(|e| unreadable(path, e))
}

pub fn read_rgba(path: &Path) -> Result<RgbaImage, PixelError> {
    let img = decode(path)?.into_rgba8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    Ok(Grid::from_vec(w, h, data).expect("decoded buffer matches its size"))
}

pub fn to_image(img: &RgbaImage) -> image::RgbaImage {
    let bytes: Vec<u8> = img.as_slice().iter().flatten().copied().collect();
    image::RgbaImage::from_raw(img.width(), img.height(), bytes).expect("buffer matches its size")
}

fn ensure_parent(path: &Path) -> Result<(), PixelError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| write_err(path, e))?;
    }
    Ok(())
}

pub fn write_rgba(path: &Path, img: &RgbaImage) -> Result<(), PixelError> {
    ensure_parent(path)?;
    to_image(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| write_err(path, e))
}

/// Single-channel PNG using the [`MaskCell`] byte encoding.
pub fn read_instance_map(path: &Path) -> Result<InstanceMap, PixelError> {
    let img = decode(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| MaskCell::decode(p.0[0])).collect();
    Ok(Grid::from_vec(w, h, data).expect("decoded buffer matches its size"))
}

pub fn write_instance_map(path: &Path, map: &InstanceMap) -> Result<(), PixelError> {
    ensure_parent(path)?;
    let img = GrayImage::from_fn(map.width(), map.height(), |x, y| Luma([map.get(x, y).encode()]));
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| write_err(path, e))
}

/// Binary mask: a pixel is set when its luma is non-zero and, for images
/// with transparency, its alpha is opaque.
pub fn read_binary_mask(path: &Path) -> Result<Grid<bool>, PixelError> {
    let img = decode(path)?.into_luma_alpha8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0[0] > 0 && p.0[1] >= 128).collect();
    Ok(Grid::from_vec(w, h, data).expect("decoded buffer matches its size"))
}

/// Pixel-exact sub-image for a box already clipped to `img`.
pub fn crop(img: &RgbaImage, b: &BBox) -> Result<RgbaImage, GeometryError> {
    let r = crop_region(b, img.width(), img.height())?;
    Ok(Grid::from_fn(r.width(), r.height(), |x, y| {
        *img.get(r.x0 + x, r.y0 + y)
    }))
}
