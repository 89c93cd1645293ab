//! Browser demo. Generates a synthetic terrain, cuts a line mask into it and
//! fills the gap with one of the classical methods. `DemoState` is plain
//! Rust; `Demo` is its JavaScript face.

use terrafill::classical::{fit_variogram, idw_fill, krige_fill, ns_inpaint, IdwConfig, NsConfig, VariogramKind};
use terrafill::grid::{CropBounds, Heightmap};
use terrafill::harness::{corpus_crop, Corpus, ERROR_MAP_CLIP};
use terrafill::maskgen::{gen_line_mask, Mask, MaskParams};
use terrafill::metrics::MetricReport;
use wasm_bindgen::prelude::*;

pub struct DemoState {
    side: usize,
    terrain: Heightmap,
    mask: Mask,
    filled: Option<Heightmap>,
}

impl DemoState {
    pub fn new(side: usize) -> Result<Self, String> {
        if side < 16 {
            return Err(format!("side {side} is too small"));
        }
        let mut s = Self {
            side,
            terrain: Heightmap::filled(side, side, 0.0).map_err(|e| e.to_string())?,
            mask: Mask::empty(side, side),
            filled: None,
        };
        s.generate_terrain(0, 0.55)?;
        Ok(s)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn terrain(&self) -> &Heightmap {
        &self.terrain
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn filled(&self) -> Option<&Heightmap> {
        self.filled.as_ref()
    }

    pub fn generate_terrain(&mut self, seed: u64, roughness: f32) -> Result<(), String> {
        let corpus = Corpus::Synthetic { roughness };
        self.terrain = corpus_crop(&corpus, self.side, CropBounds::default(), seed, 0).map_err(|e| e.to_string())?;
        self.filled = None;
        Ok(())
    }

    pub fn generate_mask(&mut self, seed: u64, max_segments: usize, max_thickness: usize) -> Result<f64, String> {
        let params = MaskParams {
            segments: 1..=max_segments.max(1),
            thickness: 1..=max_thickness.max(1),
            ..MaskParams::default()
        }
        .with_seed(seed);
        self.mask = gen_line_mask(&params, self.side, self.side).map_err(|e| e.to_string())?;
        self.filled = None;
        Ok(terrafill::maskgen::mask_fraction(&self.mask))
    }

    /// Terrain with masked pixels set to NaN.
    pub fn degraded(&self) -> Heightmap {
        let v =
            self.terrain.values().iter().zip(self.mask.bits()).map(|(&v, &m)| if m { f32::NAN } else { v }).collect();
        Heightmap::new(self.side, self.side, v).expect("same size")
    }

    /// Fill with `idw`, `kriging` or `ns`; returns the masked-region RMSE.
    pub fn fill(&mut self, method: &str) -> Result<f64, String> {
        let (h, m) = (self.degraded(), &self.mask);
        let out = match method {
            "idw" => idw_fill(&h, m, IdwConfig::default()),
            "kriging" => fit_variogram(&h, m, VariogramKind::Linear, 12).and_then(|vg| krige_fill(&h, m, vg, 64)),
            "ns" | "navier_stokes" => ns_inpaint(&h, m, NsConfig::default()),
            other => return Err(format!("unknown method `{other}`")),
        }
        .map_err(|e| e.to_string())?;
        let rmse = match MetricReport::masked(&self.terrain, &out, m).map_err(|e| e.to_string())? {
            Some(r) => r.rmse,
            None => 0.0,
        };
        self.filled = Some(out);
        Ok(rmse)
    }
}

/// Elevation in gray with a light hillshade from the north-west.
pub fn shade(h: &Heightmap) -> Vec<u8> {
    let (w, hh) = (h.width(), h.height());
    let mut rgba = Vec::with_capacity(w * hh * 4);
    for y in 0..hh {
        for x in 0..w {
            let v = h.get(x, y);
            if v.is_nan() {
                rgba.extend_from_slice(&[220, 40, 40, 255]);
                continue;
            }
            let at = |xx: usize, yy: usize| {
                let s = h.get(xx.min(w - 1), yy.min(hh - 1));
                if s.is_nan() {
                    v
                } else {
                    s
                }
            };
            let dx = at(x + 1, y) - at(x.saturating_sub(1), y);
            let dy = at(x, y + 1) - at(x, y.saturating_sub(1));
            let light = (0.5 - 4.0 * (dx + dy)).clamp(0.0, 1.0);
            let g = (255.0 * (0.65 * v + 0.35 * light)).clamp(0.0, 255.0) as u8;
            rgba.extend_from_slice(&[g, g, g, 255]);
        }
    }
    rgba
}

/// `|a - b|` in gray, white at `ERROR_MAP_CLIP`.
pub fn error_rgba(a: &Heightmap, b: &Heightmap) -> Vec<u8> {
    a.values()
        .iter()
        .zip(b.values())
        .flat_map(|(x, y)| {
            let g = (255.0 * (x - y).abs().min(ERROR_MAP_CLIP) / ERROR_MAP_CLIP) as u8;
            [g, g, g, 255]
        })
        .collect()
}

#[wasm_bindgen]
pub struct Demo(DemoState);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(side: usize) -> Result<Demo, JsError> {
        DemoState::new(side).map(Demo).map_err(|e| JsError::new(&e))
    }

    pub fn side(&self) -> usize {
        self.0.side()
    }

    pub fn generate_terrain(&mut self, seed: u32, roughness: f32) -> Result<(), JsError> {
        self.0.generate_terrain(seed as u64, roughness).map_err(|e| JsError::new(&e))
    }

    /// Returns the masked fraction.
    pub fn generate_mask(&mut self, seed: u32, max_segments: usize, max_thickness: usize) -> Result<f64, JsError> {
        self.0.generate_mask(seed as u64, max_segments, max_thickness).map_err(|e| JsError::new(&e))
    }

    /// Returns the masked-region RMSE.
    pub fn fill(&mut self, method: &str) -> Result<f64, JsError> {
        self.0.fill(method).map_err(|e| JsError::new(&e))
    }

    pub fn terrain_rgba(&self) -> Vec<u8> {
        shade(self.0.terrain())
    }

    pub fn degraded_rgba(&self) -> Vec<u8> {
        shade(&self.0.degraded())
    }

    /// Empty until `fill` has run.
    pub fn filled_rgba(&self) -> Vec<u8> {
        self.0.filled().map(shade).unwrap_or_default()
    }

    pub fn error_rgba(&self) -> Vec<u8> {
        self.0.filled().map(|f| error_rgba(self.0.terrain(), f)).unwrap_or_default()
    }
}
