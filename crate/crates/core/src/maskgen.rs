//! Degradation masks shaped like aliased line artifacts.
//!
//! A mask is a connected polyline of Bresenham segments, each stamped with a
//! square structuring element of the drawn thickness. `true` marks a missing
//! pixel.

use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("invalid mask parameters: {0}")]
    InvalidParams(String),
    #[error("every pixel masked after {0} attempts")]
    AllMasked(usize),
    #[error("mask is {got_w}x{got_h}, raster is {want_w}x{want_h}")]
    SizeMismatch { got_w: usize, got_h: usize, want_w: usize, want_h: usize },
    #[error("PBM format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("unsupported PBM variant: {0}")]
    UnsupportedVariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 || width * height != bits.len() {
            return Err(MaskError::InvalidParams(format!("{width}x{height} mask with {} bits", bits.len())));
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![true; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_masked(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn masked_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn known_count(&self) -> usize {
        self.bits.len() - self.masked_count()
    }

    pub fn check_size(&self, width: usize, height: usize) -> Result<(), MaskError> {
        if self.width != width || self.height != height {
            return Err(MaskError::SizeMismatch {
                got_w: self.width,
                got_h: self.height,
                want_w: width,
                want_h: height,
            });
        }
        Ok(())
    }

    fn set(&mut self, x: i64, y: i64) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.bits[y as usize * self.width + x as usize] = true;
        }
    }
}

/// Masked pixel count over total pixel count.
pub fn mask_fraction(m: &Mask) -> f64 {
    m.masked_count() as f64 / m.bits.len() as f64
}

/// Ranges are inclusive and sampled uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskParams {
    pub segments: RangeInclusive<usize>,
    pub thickness: RangeInclusive<usize>,
    /// Direction of each segment, radians.
    pub orientation: RangeInclusive<f64>,
    /// Segment length as a fraction of the longer raster side.
    pub length: RangeInclusive<f64>,
    pub seed: u64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            segments: 1..=4,
            thickness: 1..=6,
            orientation: 0.0..=std::f64::consts::TAU,
            length: 0.25..=0.9,
            seed: 0,
        }
    }
}

impl MaskParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), MaskError> {
        let bad = |what: &str| Err(MaskError::InvalidParams(what.to_string()));
        if self.segments.is_empty() {
            return bad("empty segment range");
        }
        if self.thickness.is_empty() || *self.thickness.start() < 1 {
            return bad("thickness range must be non-empty and >= 1");
        }
        if !(self.orientation.start() <= self.orientation.end()) {
            return bad("empty orientation range");
        }
        if !(self.length.start() <= self.length.end()) || *self.length.start() < 0.0 {
            return bad("bad length range");
        }
        Ok(())
    }
}

/// The polyline drawn for a mask: integer vertices plus per-segment
/// thickness. Exposed so geometric properties can be checked.
#[derive(Clone, Debug, PartialEq)]
pub struct LineLayout {
    pub vertices: Vec<(i64, i64)>,
    pub thickness: Vec<usize>,
}

const MAX_REGENERATIONS: usize = 32;

/// Rasterize a random connected polyline into a `w x h` mask. If the result
/// hides every pixel the seed is perturbed and the mask redrawn.
pub fn gen_line_mask(params: &MaskParams, w: usize, h: usize) -> Result<Mask, MaskError> {
    gen_line_mask_with_layout(params, w, h).map(|(m, _)| m)
}

pub fn gen_line_mask_with_layout(params: &MaskParams, w: usize, h: usize) -> Result<(Mask, LineLayout), MaskError> {
    if w < 2 || h < 2 {
        return Err(MaskError::InvalidParams(format!("raster {w}x{h} smaller than 2x2")));
    }
    params.validate()?;
    for attempt in 0..MAX_REGENERATIONS {
        let layout = sample_layout(params, w, h, attempt as u64);
        let mask = rasterize(&layout, w, h);
        if mask.known_count() > 0 {
            return Ok((mask, layout));
        }
    }
    Err(MaskError::AllMasked(MAX_REGENERATIONS))
}

fn sample_layout(params: &MaskParams, w: usize, h: usize, attempt: u64) -> LineLayout {
    let mut rng = rng::derive(params.seed, attempt);
    let segments = rng.random_range(params.segments.clone());
    let side = w.max(h) as f64;
    let mut x = rng.random_range(0..w) as i64;
    let mut y = rng.random_range(0..h) as i64;
    let mut vertices = vec![(x, y)];
    let mut thickness = Vec::with_capacity(segments);
    for _ in 0..segments {
        let angle = rng.random_range(params.orientation.clone());
        let len = rng.random_range(params.length.clone()) * side;
        let nx = (x as f64 + len * angle.cos()).round().clamp(0.0, (w - 1) as f64) as i64;
        let ny = (y as f64 + len * angle.sin()).round().clamp(0.0, (h - 1) as f64) as i64;
        thickness.push(rng.random_range(params.thickness.clone()));
        vertices.push((nx, ny));
        x = nx;
        y = ny;
    }
    LineLayout { vertices, thickness }
}

pub fn rasterize(layout: &LineLayout, w: usize, h: usize) -> Mask {
    let mut mask = Mask::empty(w, h);
    for (seg, pair) in layout.vertices.windows(2).enumerate() {
        let t = layout.thickness[seg] as i64;
        // square element of side t, centred (left-biased for even t)
        let lo = -(t - 1) / 2;
        let hi = t / 2;
        for (px, py) in bresenham(pair[0], pair[1]) {
            for dy in lo..=hi {
                for dx in lo..=hi {
                    mask.set(px + dx, py + dy);
                }
            }
        }
    }
    mask
}

/// All integer points of the segment, endpoints included.
pub fn bresenham((x0, y0): (i64, i64), (x1, y1): (i64, i64)) -> Vec<(i64, i64)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    let mut pts = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        pts.push((x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    pts
}

/// Binary PBM (`P4`): rows packed MSB first, padded to whole bytes, 1 = masked.
pub fn encode_pbm(m: &Mask) -> Vec<u8> {
    let mut out = format!("P4\n{} {}\n", m.width, m.height).into_bytes();
    let row_bytes = m.width.div_ceil(8);
    for y in 0..m.height {
        let mut row = vec![0u8; row_bytes];
        for x in 0..m.width {
            if m.is_masked(x, y) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

pub fn decode_pbm(bytes: &[u8]) -> Result<Mask, MaskError> {
    let fmt = |offset: usize, message: &str| MaskError::Format { offset: offset as u64, message: message.into() };
    match bytes.get(..2) {
        Some(b"P4") => {}
        Some(b"P1") => return Err(MaskError::UnsupportedVariant("ASCII PBM (P1)".into())),
        _ => return Err(fmt(0, "missing P4 magic")),
    }
    let mut pos = 2;
    let read_int = |pos: &mut usize| -> Result<usize, MaskError> {
        loop {
            match bytes.get(*pos) {
                Some(b'#') => {
                    while bytes.get(*pos).is_some_and(|&c| c != b'\n') {
                        *pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => *pos += 1,
                Some(c) if c.is_ascii_digit() => break,
                Some(_) => return Err(fmt(*pos, "expected integer")),
                None => return Err(fmt(*pos, "truncated header")),
            }
        }
        let start = *pos;
        while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
            *pos += 1;
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt(start, "bad integer"))
    };
    let width = read_int(&mut pos)?;
    let height = read_int(&mut pos)?;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(fmt(pos, "expected single whitespace before raster"));
    }
    pos += 1;
    if width == 0 || height == 0 {
        return Err(fmt(pos, "zero dimension"));
    }
    let row_bytes = width.div_ceil(8);
    let need = row_bytes * height;
    let data = bytes.get(pos..pos + need).ok_or_else(|| fmt(bytes.len(), "truncated raster"))?;
    let bits = (0..height)
        .flat_map(|y| (0..width).map(move |x| data[y * row_bytes + x / 8] & (0x80 >> (x % 8)) != 0))
        .collect();
    Mask::new(width, height, bits)
}

pub fn read_pbm(path: impl AsRef<Path>) -> Result<Mask, MaskError> {
    decode_pbm(&fs::read(path)?)
}

pub fn write_pbm(m: &Mask, path: impl AsRef<Path>) -> Result<(), MaskError> {
    fs::write(path, encode_pbm(m))?;
    Ok(())
}

/// Masked pixels white, known black.
pub fn write_mask_png(m: &Mask, path: impl AsRef<Path>) -> Result<(), crate::grid::GridError> {
    let pixels: Vec<u8> = m.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    crate::grid::preview::write_png_bytes(&pixels, m.width, m.height, path)
}
