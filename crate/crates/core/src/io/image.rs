//! RGB images in linear light and PNG encoding (sRGB 8-bit, 16-bit depth).

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: u32, height: u32, data: Vec<[f64; 3]>) -> Result<Self> {
        let n = (width * height) as usize;
        if data.len() != n {
            return Err(Error::shape(n, data.len()));
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        Image { width, height, data: vec![rgb; (width * height) as usize] }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        self.data[(y * self.width + x) as usize]
    }

    pub fn to_srgb(&self) -> Image {
        Image { width: self.width, height: self.height, data: self.data.iter().map(|p| p.map(linear_to_srgb)).collect() }
    }
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

fn save_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

/// Reads an 8-bit (or 16-bit) PNG without any transfer-curve conversion.
pub fn load_png(path: &Path) -> Result<Image> {
    let img = open(path)?.to_rgb32f();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect();
    Ok(Image { width: w, height: h, data })
}

/// Reads an sRGB-encoded PNG into linear light.
pub fn load_png_linear(path: &Path) -> Result<Image> {
    let mut img = load_png(path)?;
    for p in &mut img.data {
        *p = p.map(srgb_to_linear);
    }
    Ok(img)
}

/// Writes values in `[0, 1]` as an 8-bit RGB PNG without conversion.
pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(img.width, img.height, |x, y| {
        Rgb(img.pixel(x, y).map(to_u8))
    });
    buf.save(path).map_err(|e| save_err(path, e))
}

/// Writes a linear image as sRGB.
pub fn save_png_srgb(path: &Path, img: &Image) -> Result<()> {
    save_png(path, &img.to_srgb())
}

/// Reads a binary mask (any channel above one half counts as set).
pub fn load_mask(path: &Path) -> Result<(u32, u32, Vec<bool>)> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((w, h, img.pixels().map(|p| p[0] > 127).collect()))
}

pub fn save_mask(path: &Path, width: u32, height: u32, mask: &[bool]) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_fn(width, height, |x, y| Luma([if mask[(y * width + x) as usize] { 255 } else { 0 }]));
    buf.save(path).map_err(|e| save_err(path, e))
}

/// Reads a 16-bit depth PNG; stored value × `scale` is metric depth, 0 marks invalid.
pub fn load_depth_png(path: &Path, scale: f64) -> Result<(u32, u32, Vec<f64>)> {
    let img = open(path)?.to_luma16();
    let (w, h) = img.dimensions();
    Ok((w, h, img.pixels().map(|p| p[0] as f64 * scale).collect()))
}

pub fn save_depth_png(path: &Path, width: u32, height: u32, depth: &[f64], scale: f64) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(width, height, |x, y| {
        let d = depth[(y * width + x) as usize] / scale;
        Luma([if d.is_finite() && d > 0.0 { d.round().min(65535.0) as u16 } else { 0 }])
    });
    buf.save(path).map_err(|e| save_err(path, e))
}
