//! `HGT32` raw grids: `"HGT1"`, u32 width, u32 height, then row-major
//! little-endian f32 samples. NaN marks nodata.

use super::{GridError, Heightmap, Result};

const MAGIC: &[u8; 4] = b"HGT1";
const HEADER: usize = 12;

pub fn encode_hgt32(h: &Heightmap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * h.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(h.width() as u32).to_le_bytes());
    out.extend_from_slice(&(h.height() as u32).to_le_bytes());
    for v in h.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_hgt32(bytes: &[u8]) -> Result<Heightmap> {
    let fmt = |offset: usize, message: &str| GridError::Format { offset: offset as u64, message: message.into() };
    if bytes.len() < HEADER {
        return Err(fmt(bytes.len(), "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(fmt(0, "bad HGT32 magic"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(fmt(4, "zero dimension"));
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER))
        .ok_or_else(|| fmt(4, "dimensions overflow"))?;
    if bytes.len() < expected {
        return Err(fmt(bytes.len(), "truncated sample data"));
    }
    if bytes.len() > expected {
        return Err(fmt(expected, "trailing bytes after sample data"));
    }
    let values = bytes[HEADER..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Heightmap::new(width, height, values).map_err(|e| match e {
        GridError::NonFinite(i) => fmt(HEADER + 4 * i, "infinite sample"),
        other => other,
    })
}
