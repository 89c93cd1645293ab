//! Heightmap triangulation and Wavefront OBJ/MTL export. Inpainted cells are
//! put in their own group so viewers can shade them differently.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::Heightmap;
use crate::maskgen::Mask;

pub const DEFAULT_EXAGGERATION: f32 = 30.0;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("heightmap contains nodata at index {0}")]
    ContainsNodata(usize),
    #[error("mesh needs at least 2x2 pixels, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("mask is {mask_w}x{mask_h}, heightmap is {w}x{h}")]
    MaskSize { mask_w: usize, mask_h: usize, w: usize, h: usize },
    #[error("malformed OBJ at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MeshError>;

#[derive(Clone, Debug, PartialEq)]
pub struct TerrainMesh {
    /// `(column, row, value * exaggeration)`.
    pub vertices: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub inpainted: Vec<bool>,
}

impl TerrainMesh {
    /// A triangle is inpainted if any of its vertices is.
    pub fn triangle_inpainted(&self, t: &[u32; 3]) -> bool {
        t.iter().any(|&i| self.inpainted[i as usize])
    }
}

pub fn heightmap_to_mesh(h: &Heightmap, m: Option<&Mask>, exaggeration: f32) -> Result<TerrainMesh> {
    let (w, hh) = (h.width(), h.height());
    if w < 2 || hh < 2 {
        return Err(MeshError::TooSmall(w, hh));
    }
    if let Some(i) = h.values().iter().position(|v| v.is_nan()) {
        return Err(MeshError::ContainsNodata(i));
    }
    if let Some(m) = m {
        if m.width() != w || m.height() != hh {
            return Err(MeshError::MaskSize { mask_w: m.width(), mask_h: m.height(), w, h: hh });
        }
    }
    let mut vertices = Vec::with_capacity(w * hh);
    for y in 0..hh {
        for x in 0..w {
            vertices.push([x as f32, y as f32, h.get(x, y) * exaggeration]);
        }
    }
    let inpainted = match m {
        Some(m) => m.bits().to_vec(),
        None => vec![false; w * hh],
    };
    let mut triangles = Vec::with_capacity(2 * (w - 1) * (hh - 1));
    let idx = |x: usize, y: usize| (y * w + x) as u32;
    for y in 0..hh - 1 {
        for x in 0..w - 1 {
            let (v00, v10, v01, v11) = (idx(x, y), idx(x + 1, y), idx(x, y + 1), idx(x + 1, y + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(TerrainMesh { vertices, triangles, inpainted })
}

/// `terrain.obj` -> `terrain.mtl`.
pub fn mtl_path(obj: &Path) -> PathBuf {
    obj.with_extension("mtl")
}

pub fn obj_string(mesh: &TerrainMesh, mtl_name: &str) -> String {
    let mut s = String::with_capacity(mesh.vertices.len() * 32 + mesh.triangles.len() * 24);
    let _ = writeln!(s, "mtllib {mtl_name}");
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:.6} {:.6} {:.6}", v[0], v[1], v[2]);
    }
    for (group, tagged) in [("valid", false), ("inpainted", true)] {
        let faces: Vec<&[u32; 3]> = mesh.triangles.iter().filter(|t| mesh.triangle_inpainted(t) == tagged).collect();
        if faces.is_empty() {
            continue;
        }
        let _ = writeln!(s, "g {group}");
        let _ = writeln!(s, "usemtl mtl_{group}");
        for t in faces {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
    }
    s
}

pub fn mtl_string() -> String {
    "newmtl mtl_valid\nKd 0.700000 0.550000 0.400000\n\nnewmtl mtl_inpainted\nKd 0.200000 0.450000 0.900000\n".into()
}

/// Write the OBJ and its sidecar MTL next to it.
pub fn write_obj(mesh: &TerrainMesh, path: &Path) -> Result<()> {
    let mtl = mtl_path(path);
    let name = mtl.file_name().and_then(|n| n.to_str()).unwrap_or("terrain.mtl").to_string();
    std::fs::write(path, obj_string(mesh, &name))?;
    std::fs::write(&mtl, mtl_string())?;
    Ok(())
}

/// What the minimal reader recovers from an OBJ file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedObj {
    pub vertices: Vec<[f64; 3]>,
    /// Zero-based indices with the group each face belongs to.
    pub faces: Vec<([usize; 3], String)>,
    pub materials: Vec<String>,
}

/// Reads `v`, triangular `f`, `g` and `usemtl` lines; rejects out-of-range
/// face indices.
pub fn parse_obj(text: &str) -> Result<ParsedObj> {
    let mut out = ParsedObj::default();
    let mut group = String::from("default");
    let err = |line: usize, message: String| MeshError::Parse { line, message };
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let mut parts = raw.split_whitespace();
        match parts.next() {
            Some("v") => {
                let c: Vec<f64> = parts
                    .map(|p| p.parse().map_err(|_| err(ln, format!("bad number {p:?}"))))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(err(ln, "vertex needs 3 coordinates".into()));
                }
                out.vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|p| {
                        let head = p.split('/').next().unwrap_or("");
                        head.parse::<usize>().map_err(|_| err(ln, format!("bad index {p:?}")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(err(ln, "only triangles are supported".into()));
                }
                if idx.iter().any(|&k| k == 0 || k > out.vertices.len()) {
                    return Err(err(ln, "face index out of range".into()));
                }
                out.faces.push(([idx[0] - 1, idx[1] - 1, idx[2] - 1], group.clone()));
            }
            Some("g") => group = parts.collect::<Vec<_>>().join(" "),
            Some("usemtl") => out.materials.push(parts.collect::<Vec<_>>().join(" ")),
            _ => {}
        }
    }
    Ok(out)
}
