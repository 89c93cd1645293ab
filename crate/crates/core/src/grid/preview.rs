use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{GridError, Result};

/// 8-bit grayscale PNG of `values` (row-major, `[0, 1]` mapped linearly to
/// `0..=255`, NaN drawn black). For viewing only.
pub fn write_png_gray(values: &[f32], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let pixels: Vec<u8> = values.iter().map(|&v| to_byte(v)).collect();
    write_png_bytes(&pixels, width, height, path)
}

pub(crate) fn to_byte(v: f32) -> u8 {
    if v.is_nan() {
        0
    } else {
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

pub(crate) fn write_png_bytes(pixels: &[u8], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| GridError::Io(std::io::Error::other(e.to_string()));
    let mut writer = enc.write_header().map_err(to_err)?;
    writer.write_image_data(pixels).map_err(to_err)?;
    writer.finish().map_err(to_err)?;
    Ok(())
}
