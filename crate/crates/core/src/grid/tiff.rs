//! Minimal TIFF profile: little-endian, one band, 32-bit IEEE float samples,
//! strip organized, uncompressed. Anything else is `UnsupportedVariant`.

use super::{GridError, Heightmap, Result};

const TAG_WIDTH: u16 = 256;
const TAG_LENGTH: u16 = 257;
const TAG_BITS_PER_SAMPLE: u16 = 258;
const TAG_COMPRESSION: u16 = 259;
const TAG_PHOTOMETRIC: u16 = 262;
const TAG_STRIP_OFFSETS: u16 = 273;
const TAG_SAMPLES_PER_PIXEL: u16 = 277;
const TAG_ROWS_PER_STRIP: u16 = 278;
const TAG_STRIP_BYTE_COUNTS: u16 = 279;
const TAG_PLANAR_CONFIG: u16 = 284;
const TAG_PREDICTOR: u16 = 317;
const TAG_TILE_WIDTH: u16 = 322;
const TAG_SAMPLE_FORMAT: u16 = 339;
const TAG_GDAL_NODATA: u16 = 42113;

const TYPE_ASCII: u16 = 2;
const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;

const STRIP_TARGET_BYTES: usize = 8192;

/// Encode with the fixed layout: header, IFD, strip offset/count arrays,
/// then pixel strips. Deterministic for a given raster.
pub fn encode_tiff(h: &Heightmap) -> Vec<u8> {
    let width = h.width();
    let height = h.height();
    let row_bytes = width * 4;
    let rows_per_strip = (STRIP_TARGET_BYTES / row_bytes).clamp(1, height);
    let n_strips = height.div_ceil(rows_per_strip);

    let n_entries = 12u16;
    let ifd_offset = 8usize;
    let ifd_len = 2 + 12 * n_entries as usize + 4;
    let arrays_offset = ifd_offset + ifd_len;
    // single-strip files keep offset/count inline in the entry
    let arrays_len = if n_strips > 1 { 8 * n_strips } else { 0 };
    let data_offset = arrays_offset + arrays_len;

    let strip_sizes: Vec<usize> =
        (0..n_strips).map(|s| (rows_per_strip.min(height - s * rows_per_strip)) * row_bytes).collect();
    let mut strip_offsets = Vec::with_capacity(n_strips);
    let mut acc = data_offset;
    for size in &strip_sizes {
        strip_offsets.push(acc);
        acc += size;
    }

    let mut out = Vec::with_capacity(acc);
    out.extend_from_slice(b"II*\0");
    out.extend_from_slice(&(ifd_offset as u32).to_le_bytes());
    out.extend_from_slice(&n_entries.to_le_bytes());

    let mut entry = |tag: u16, typ: u16, count: u32, value: [u8; 4]| {
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&typ.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&value);
    };
    let short = |v: u16| {
        let b = v.to_le_bytes();
        [b[0], b[1], 0, 0]
    };
    let long = |v: u32| v.to_le_bytes();

    entry(TAG_WIDTH, TYPE_LONG, 1, long(width as u32));
    entry(TAG_LENGTH, TYPE_LONG, 1, long(height as u32));
    entry(TAG_BITS_PER_SAMPLE, TYPE_SHORT, 1, short(32));
    entry(TAG_COMPRESSION, TYPE_SHORT, 1, short(1));
    entry(TAG_PHOTOMETRIC, TYPE_SHORT, 1, short(1));
    if n_strips > 1 {
        entry(TAG_STRIP_OFFSETS, TYPE_LONG, n_strips as u32, long(arrays_offset as u32));
    } else {
        entry(TAG_STRIP_OFFSETS, TYPE_LONG, 1, long(strip_offsets[0] as u32));
    }
    entry(TAG_SAMPLES_PER_PIXEL, TYPE_SHORT, 1, short(1));
    entry(TAG_ROWS_PER_STRIP, TYPE_LONG, 1, long(rows_per_strip as u32));
    if n_strips > 1 {
        entry(TAG_STRIP_BYTE_COUNTS, TYPE_LONG, n_strips as u32, long((arrays_offset + 4 * n_strips) as u32));
    } else {
        entry(TAG_STRIP_BYTE_COUNTS, TYPE_LONG, 1, long(strip_sizes[0] as u32));
    }
    entry(TAG_PLANAR_CONFIG, TYPE_SHORT, 1, short(1));
    entry(TAG_SAMPLE_FORMAT, TYPE_SHORT, 1, short(3));
    entry(TAG_GDAL_NODATA, TYPE_ASCII, 4, *b"nan\0");
    out.extend_from_slice(&0u32.to_le_bytes());

    if n_strips > 1 {
        for o in &strip_offsets {
            out.extend_from_slice(&(*o as u32).to_le_bytes());
        }
        for s in &strip_sizes {
            out.extend_from_slice(&(*s as u32).to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), data_offset);
    for v in h.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn format_err(offset: usize, message: impl Into<String>) -> GridError {
    GridError::Format { offset: offset as u64, message: message.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn u16(&self, at: usize) -> Result<u16> {
        self.bytes
            .get(at..at + 2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .ok_or_else(|| format_err(at, "unexpected end of file"))
    }

    fn u32(&self, at: usize) -> Result<u32> {
        self.bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| format_err(at, "unexpected end of file"))
    }
}

struct Entry {
    at: usize,
    typ: u16,
    count: u32,
    value_at: usize,
}

impl Entry {
    /// Read the entry's values as unsigned integers (SHORT or LONG).
    fn uints(&self, r: &Reader) -> Result<Vec<u32>> {
        let size = match self.typ {
            TYPE_SHORT => 2,
            TYPE_LONG => 4,
            t => return Err(format_err(self.at, format!("unexpected field type {t}"))),
        };
        let total = size * self.count as usize;
        let base = if total <= 4 { self.value_at } else { r.u32(self.value_at)? as usize };
        (0..self.count as usize)
            .map(|i| match size {
                2 => r.u16(base + 2 * i).map(u32::from),
                _ => r.u32(base + 4 * i),
            })
            .collect()
    }

    fn single(&self, r: &Reader) -> Result<u32> {
        let v = self.uints(r)?;
        v.first().copied().ok_or_else(|| format_err(self.at, "empty field"))
    }
}

pub fn decode_tiff(bytes: &[u8]) -> Result<Heightmap> {
    if bytes.len() < 8 {
        return Err(format_err(bytes.len(), "file shorter than TIFF header"));
    }
    match &bytes[..4] {
        b"II*\0" => {}
        b"MM\0*" => return Err(GridError::UnsupportedVariant("big-endian TIFF".into())),
        _ => return Err(format_err(0, "bad TIFF magic")),
    }
    let r = Reader { bytes };
    let ifd = r.u32(4)? as usize;
    let n = r.u16(ifd)? as usize;

    let mut width = None;
    let mut length = None;
    let mut rows_per_strip = None;
    let mut offsets = None;
    let mut counts = None;
    let mut sample_format = 1;
    let mut bits = 1;
    let mut samples = 1;

    for i in 0..n {
        let at = ifd + 2 + 12 * i;
        let tag = r.u16(at)?;
        let e = Entry { at, typ: r.u16(at + 2)?, count: r.u32(at + 4)?, value_at: at + 8 };
        match tag {
            TAG_WIDTH => width = Some(e.single(&r)? as usize),
            TAG_LENGTH => length = Some(e.single(&r)? as usize),
            TAG_BITS_PER_SAMPLE => {
                let v = e.uints(&r)?;
                bits = v[0];
                if v.iter().any(|&b| b != bits) {
                    return Err(GridError::UnsupportedVariant("mixed bits per sample".into()));
                }
            }
            TAG_COMPRESSION => {
                let c = e.single(&r)?;
                if c != 1 {
                    return Err(GridError::UnsupportedVariant(format!("compression {c}")));
                }
            }
            TAG_PHOTOMETRIC => {
                let p = e.single(&r)?;
                if p > 1 {
                    return Err(GridError::UnsupportedVariant(format!("photometric interpretation {p}")));
                }
            }
            TAG_STRIP_OFFSETS => offsets = Some(e.uints(&r)?),
            TAG_SAMPLES_PER_PIXEL => samples = e.single(&r)?,
            TAG_ROWS_PER_STRIP => rows_per_strip = Some(e.single(&r)? as usize),
            TAG_STRIP_BYTE_COUNTS => counts = Some(e.uints(&r)?),
            TAG_PLANAR_CONFIG => {
                if e.single(&r)? != 1 {
                    return Err(GridError::UnsupportedVariant("planar configuration".into()));
                }
            }
            TAG_PREDICTOR => {
                if e.single(&r)? != 1 {
                    return Err(GridError::UnsupportedVariant("predictor".into()));
                }
            }
            TAG_TILE_WIDTH => return Err(GridError::UnsupportedVariant("tiled TIFF".into())),
            TAG_SAMPLE_FORMAT => sample_format = e.single(&r)?,
            _ => {}
        }
    }

    if samples != 1 {
        return Err(GridError::UnsupportedVariant(format!("{samples} samples per pixel")));
    }
    if bits != 32 || sample_format != 3 {
        return Err(GridError::UnsupportedVariant(format!("{bits}-bit samples with format {sample_format}")));
    }
    let width = width.ok_or_else(|| format_err(ifd, "missing ImageWidth"))?;
    let height = length.ok_or_else(|| format_err(ifd, "missing ImageLength"))?;
    if width == 0 || height == 0 {
        return Err(format_err(ifd, "zero image dimension"));
    }
    let offsets = offsets.ok_or_else(|| format_err(ifd, "missing StripOffsets"))?;
    let counts = counts.ok_or_else(|| format_err(ifd, "missing StripByteCounts"))?;
    let rows_per_strip = rows_per_strip.unwrap_or(height).clamp(1, height);
    let n_strips = height.div_ceil(rows_per_strip);
    if offsets.len() != n_strips || counts.len() != n_strips {
        return Err(format_err(ifd, format!("expected {n_strips} strips, found {}", offsets.len())));
    }

    let mut values = Vec::with_capacity(width * height);
    for (s, (&off, &count)) in offsets.iter().zip(&counts).enumerate() {
        let rows = rows_per_strip.min(height - s * rows_per_strip);
        let expected = rows * width * 4;
        if count as usize != expected {
            return Err(format_err(off as usize, format!("strip {s} holds {count} bytes, expected {expected}")));
        }
        let start = off as usize;
        let strip = bytes
            .get(start..start + expected)
            .ok_or_else(|| format_err(bytes.len(), format!("strip {s} truncated")))?;
        values.extend(strip.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    }
    Heightmap::new(width, height, values).map_err(|e| match e {
        GridError::NonFinite(i) => format_err(0, format!("infinite sample at pixel {i}")),
        other => other,
    })
}
