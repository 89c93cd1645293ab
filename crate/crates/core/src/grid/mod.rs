//! Heightmap rasters: normalization, nearest-neighbour rescaling, random crop
//! sampling, synthetic terrain and file I/O.
//!
//! Nodata cells are stored as NaN. Values are `f32`, row-major.

mod hgt;
pub(crate) mod preview;
mod synth;
mod tiff;

use std::fs;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::rng::SeededRng;

pub use hgt::{decode_hgt32, encode_hgt32};
pub use preview::write_png_gray;
pub use synth::synth_terrain;
pub use tiff::{decode_tiff, encode_tiff};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid dimensions {width}x{height} for {len} values")]
    InvalidDimensions { width: usize, height: usize, len: usize },
    #[error("infinite value at index {0}")]
    NonFinite(usize),
    #[error("heightmap is flat (min = max = {0})")]
    DegenerateFlat(f32),
    #[error("heightmap contains nodata cells")]
    ContainsNodata,
    #[error("no valid crop found after {0} attempts")]
    NoValidCrop(usize),
    #[error("side {0} is not of the form 2^k + 1")]
    BadSide(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GridError> = std::result::Result<T, E>;

/// Single-band raster. Immutable once built; transformations return new maps.
#[derive(Clone, Debug)]
pub struct Heightmap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl Heightmap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || width.checked_mul(height) != Some(values.len()) {
            return Err(GridError::InvalidDimensions { width, height, len: values.len() });
        }
        if let Some(i) = values.iter().position(|v| v.is_infinite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn has_nodata(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Min and max over finite cells, `None` if every cell is nodata.
    pub fn min_max(&self) -> Option<(f32, f32)> {
        self.values.iter().filter(|v| !v.is_nan()).fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Extract a sub-rectangle. Panics if it does not fit.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Heightmap {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop outside raster");
        let mut values = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            values.extend_from_slice(&self.values[y * self.width + x0..y * self.width + x0 + w]);
        }
        Heightmap { width: w, height: h, values }
    }

    /// Same shape and bitwise-identical cells (so NaN placement and payload
    /// both have to agree).
    pub fn bit_eq(&self, other: &Heightmap) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// True when every non-NaN value lies in `[0, 1]`.
    pub fn is_normalized(&self) -> bool {
        self.values.iter().filter(|v| !v.is_nan()).all(|v| (0.0..=1.0).contains(v))
    }
}

/// Min and max of the raster before normalization, kept so the map can be
/// brought back to metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationRecord {
    pub min: f32,
    pub max: f32,
}

impl NormalizationRecord {
    pub fn denormalize(&self, h: &Heightmap) -> Heightmap {
        let span = self.max as f64 - self.min as f64;
        let values = h.values.iter().map(|&v| (self.min as f64 + v as f64 * span) as f32).collect();
        Heightmap { width: h.width, height: h.height, values }
    }
}

/// Per-raster min-max normalization to `[0, 1]`.
pub fn normalize(h: &Heightmap) -> Result<(Heightmap, NormalizationRecord)> {
    if h.has_nodata() {
        return Err(GridError::ContainsNodata);
    }
    let (min, max) = h.min_max().expect("non-empty raster without nodata");
    if max <= min {
        return Err(GridError::DegenerateFlat(min));
    }
    let lo = min as f64;
    let span = max as f64 - lo;
    let values = h.values.iter().map(|&v| (((v as f64 - lo) / span) as f32).clamp(0.0, 1.0)).collect();
    Ok((Heightmap { width: h.width, height: h.height, values }, NormalizationRecord { min, max }))
}

/// Nearest-neighbour resize with pixel-centre sampling:
/// `out(x, y) = in(floor((x + 0.5) W / out_w), floor((y + 0.5) H / out_h))`.
/// Aspect ratio is not preserved.
pub fn rescale_nearest(h: &Heightmap, out_w: usize, out_h: usize) -> Result<Heightmap> {
    if out_w == 0 || out_h == 0 {
        return Err(GridError::InvalidParameter(format!("output size {out_w}x{out_h}")));
    }
    let src_col: Vec<usize> = (0..out_w).map(|x| ((2 * x + 1) * h.width) / (2 * out_w)).collect();
    let mut values = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let sy = ((2 * y + 1) * h.height) / (2 * out_h);
        let row = &h.values[sy * h.width..(sy + 1) * h.width];
        values.extend(src_col.iter().map(|&sx| row[sx]));
    }
    Ok(Heightmap { width: out_w, height: out_h, values })
}

/// Where a crop came from and what it was resized to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropSpec {
    pub origin_x: usize,
    pub origin_y: usize,
    pub side: usize,
    pub target_side: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropBounds {
    pub min_side: usize,
    pub max_side: usize,
    pub target: usize,
}

impl Default for CropBounds {
    fn default() -> Self {
        Self { min_side: 512, max_side: 2048, target: 128 }
    }
}

#[derive(Clone, Debug)]
pub struct Crop {
    pub heightmap: Heightmap,
    pub spec: CropSpec,
    pub record: NormalizationRecord,
}

/// Random square crop, rescaled to `target x target` and normalized.
/// Crops with nodata or no relief are rejected and redrawn.
pub fn sample_crop(src: &Heightmap, rng: &mut SeededRng, bounds: CropBounds, max_attempts: usize) -> Result<Crop> {
    if bounds.target == 0 || bounds.min_side == 0 || bounds.min_side > bounds.max_side {
        return Err(GridError::InvalidParameter(format!("crop bounds {bounds:?}")));
    }
    let limit = src.width.min(src.height);
    let max_side = bounds.max_side.min(limit);
    let min_side = bounds.min_side.min(max_side);
    for _ in 0..max_attempts {
        let side = rng.random_range(min_side..=max_side);
        let origin_x = rng.random_range(0..=src.width - side);
        let origin_y = rng.random_range(0..=src.height - side);
        let raw = src.crop(origin_x, origin_y, side, side);
        if raw.has_nodata() {
            continue;
        }
        let resized = rescale_nearest(&raw, bounds.target, bounds.target)?;
        match normalize(&resized) {
            Ok((heightmap, record)) => {
                let spec = CropSpec { origin_x, origin_y, side, target_side: bounds.target };
                return Ok(Crop { heightmap, spec, record });
            }
            Err(GridError::DegenerateFlat(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GridError::NoValidCrop(max_attempts))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridFormat {
    Tiff,
    Hgt32,
}

impl GridFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("tif" | "tiff") => Ok(GridFormat::Tiff),
            Some("hgt" | "hgt32") => Ok(GridFormat::Hgt32),
            other => Err(GridError::UnsupportedVariant(format!("grid extension {other:?}"))),
        }
    }
}

/// Read a TIFF or HGT32 grid; the format is detected from the magic bytes.
pub fn read_grid(path: impl AsRef<Path>) -> Result<Heightmap> {
    let bytes = fs::read(path)?;
    decode_grid(&bytes)
}

pub fn decode_grid(bytes: &[u8]) -> Result<Heightmap> {
    match bytes.get(..4) {
        Some(b"HGT1") => decode_hgt32(bytes),
        Some(b"II*\0") | Some(b"MM\0*") => decode_tiff(bytes),
        Some(_) => Err(GridError::UnsupportedVariant("unknown magic bytes".into())),
        None => Err(GridError::Format { offset: bytes.len() as u64, message: "file shorter than magic".into() }),
    }
}

/// Write a grid, choosing the format from the file extension.
pub fn write_grid(h: &Heightmap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match GridFormat::from_path(path)? {
        GridFormat::Tiff => encode_tiff(h),
        GridFormat::Hgt32 => encode_hgt32(h),
    };
    fs::write(path, bytes)?;
    Ok(())
}
