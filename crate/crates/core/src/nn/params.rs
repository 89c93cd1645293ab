//! `UNP1` flat parameter files.
//!
//! Layout (little endian): magic `UNP1`, `u32` entry count, then per entry a
//! `u32` path length, the UTF-8 path, a `u8` rank, `rank` dims as `u32` and
//! the `f32` values.

use std::collections::BTreeMap;
use std::path::Path;

use super::{NnError, Result, Tensor};

pub type ParamStore = BTreeMap<String, Tensor>;

const MAGIC: &[u8; 4] = b"UNP1";

pub fn encode_unp1(store: &ParamStore) -> Vec<u8> {
    let total: usize = store.iter().map(|(k, t)| 9 + k.len() + 4 * t.shape().len() + 4 * t.numel()).sum();
    let mut out = Vec::with_capacity(8 + total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(NnError::Format { offset: self.pos, message: format!("truncated {what}") });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_unp1(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(NnError::Format { offset: 0, message: "bad magic".into() });
    }
    let count = r.u32("entry count")?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let at = r.pos;
        let len = r.u32("path length")? as usize;
        let name = std::str::from_utf8(r.take(len, "path")?)
            .map_err(|_| NnError::Format { offset: at + 4, message: "path is not UTF-8".into() })?
            .to_string();
        let rank = r.take(1, "rank")?[0] as usize;
        if rank > 4 {
            return Err(NnError::Format { offset: r.pos - 1, message: format!("rank {rank} exceeds 4") });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or(NnError::Format { offset: r.pos, message: "shape overflows".into() })?;
        let raw = r.take(4 * n, "tensor data")?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if store.contains_key(&name) {
            return Err(NnError::Format { offset: at, message: format!("duplicate entry {name}") });
        }
        store.insert(name, Tensor::new(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(NnError::Format { offset: r.pos, message: "trailing bytes".into() });
    }
    Ok(store)
}

pub fn write_unp1(store: &ParamStore, path: &Path) -> Result<()> {
    std::fs::write(path, encode_unp1(store))?;
    Ok(())
}

pub fn read_unp1(path: &Path) -> Result<ParamStore> {
    decode_unp1(&std::fs::read(path)?)
}
