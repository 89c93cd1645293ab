use super::neighbors::{KnownPoint, NeighborIndex};
use super::{check_inputs, fill_masked, FillError, Result};
use crate::grid::Heightmap;
use crate::maskgen::Mask;

/// Shepard interpolation over the `neighbors` nearest known pixels with
/// weights `d^-power`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdwConfig {
    pub neighbors: usize,
    pub power: f64,
}

impl Default for IdwConfig {
    fn default() -> Self {
        Self { neighbors: 12, power: 2.0 }
    }
}

impl IdwConfig {
    fn validate(&self) -> Result<()> {
        if self.neighbors < 1 || !(self.power > 0.0) || !self.power.is_finite() {
            return Err(FillError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Weighted average of `points`. Distances are pixel-centre Euclidean; a
/// zero-distance point returns its own value.
pub fn idw_estimate(points: &[KnownPoint], power: f64) -> f64 {
    if let Some(p) = points.iter().find(|p| p.dist2 == 0) {
        return p.value;
    }
    // d^-p = (d^2)^(-p/2); normalise by the nearest weight so large powers
    // do not underflow
    let half = power / 2.0;
    let d0 = points.iter().map(|p| p.dist2).min().unwrap_or(1) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for p in points {
        let w = (d0 / p.dist2 as f64).powf(half);
        num += w * p.value;
        den += w;
    }
    num / den
}

pub fn idw_fill(h: &Heightmap, m: &Mask, cfg: IdwConfig) -> Result<Heightmap> {
    cfg.validate()?;
    check_inputs(h, m)?;
    let index = NeighborIndex::new(h, m);
    if index.known_count() < cfg.neighbors {
        return Err(FillError::InsufficientKnown { needed: cfg.neighbors, have: index.known_count() });
    }
    fill_masked(h, m, |x, y| {
        let pts = index.nearest(x, y, cfg.neighbors);
        Ok(idw_estimate(&pts, cfg.power) as f32)
    })
}
