//! Linear-light RGB float images and 8-bit sRGB PNG I/O.

use std::path::Path;

use crate::error::{Error, Result};
use crate::morphable_model::Vec3;

/// Row-major RGB image with linear values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Vec3>,
}

impl ImageRgb {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, Vec3::zeros())
    }

    pub fn filled(width: u32, height: u32, color: Vec3) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width as usize * height as usize],
        }
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> Vec3 {
        self.pixels[self.index(x, y)]
    }

    pub fn same_size(&self, other: &ImageRgb) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Sub-image; the rectangle is clipped to the image bounds and kept at least 1x1.
    pub fn crop(&self, x0: i64, y0: i64, w: i64, h: i64) -> ImageRgb {
        let x0 = x0.clamp(0, self.width as i64 - 1);
        let y0 = y0.clamp(0, self.height as i64 - 1);
        let x1 = (x0 + w.max(1)).min(self.width as i64);
        let y1 = (y0 + h.max(1)).min(self.height as i64);
        let (cw, ch) = ((x1 - x0) as u32, (y1 - y0) as u32);
        let mut out = ImageRgb::new(cw, ch);
        for y in 0..ch {
            for x in 0..cw {
                let i = out.index(x, y);
                out.pixels[i] = self.get(x0 as u32 + x, y0 as u32 + y);
            }
        }
        out
    }

    /// Rec. 709 luminance of each pixel.
    pub fn luminance(&self) -> Vec<f64> {
        self.pixels
            .iter()
            .map(|p| 0.2126 * p.x + 0.7152 * p.y + 0.0722 * p.z)
            .collect()
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width, self.height, |x, y| {
            let p = self.get(x, y);
            image::Rgb([encode_srgb8(p.x), encode_srgb8(p.y), encode_srgb8(p.z)])
        })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (width, height) = img.dimensions();
        let pixels = img
            .pixels()
            .map(|p| Vec3::new(decode_srgb8(p[0]), decode_srgb8(p[1]), decode_srgb8(p[2])))
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.to_rgb8().write_to(&mut buf, image::ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_png(&bytes)
    }
}

/// sRGB transfer function, 8-bit code to linear.
pub fn decode_srgb8(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// Linear to 8-bit sRGB, clamped to `[0, 1]` first.
pub fn encode_srgb8(linear: f64) -> u8 {
    let l = if linear.is_nan() { 0.0 } else { linear.clamp(0.0, 1.0) };
    let c = if l <= 0.0031308 {
        12.92 * l
    } else {
        1.055 * l.powf(1.0 / 2.4) - 0.055
    };
    (c * 255.0).round() as u8
}
