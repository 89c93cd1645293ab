//! Navier-Stokes style inpainting: the image Laplacian is transported
//! along isophotes (`I_t = grad(lap I) . perp(grad I)`), interleaved with
//! a small edge-preserving diffusion. Only masked pixels evolve.

use super::{check_inputs, known_range, FillError, Result};
use crate::grid::Heightmap;
use crate::maskgen::Mask;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsConfig {
    pub iterations: usize,
    pub dt: f64,
    pub diffusion_weight: f64,
    pub convergence_eps: f64,
    /// One diffusion step after this many transport steps.
    pub diffusion_every: usize,
    /// Gauss-Seidel sweeps of the harmonic initial fill.
    pub init_sweeps: usize,
}

impl Default for NsConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            dt: 0.1,
            diffusion_weight: 1.0,
            convergence_eps: 1e-6,
            diffusion_every: 2,
            init_sweeps: 2000,
        }
    }
}

impl NsConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.iterations >= 1
            && self.dt > 0.0
            && self.dt.is_finite()
            && self.diffusion_weight >= 0.0
            && self.convergence_eps >= 0.0
            && self.diffusion_every >= 1;
        if ok {
            Ok(())
        } else {
            Err(FillError::InvalidConfig(format!("{self:?}")))
        }
    }
}

struct Field {
    w: usize,
    h: usize,
    u: Vec<f64>,
}

impl Field {
    /// Clamped (Neumann) lookup.
    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.u[y * self.w + x]
    }

    fn laplacian(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.u.len()];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                out[y as usize * self.w + x as usize] =
                    self.at(x - 1, y) + self.at(x + 1, y) + self.at(x, y - 1) + self.at(x, y + 1) - 4.0 * self.at(x, y);
            }
        }
        out
    }
}

pub fn ns_inpaint(h: &Heightmap, m: &Mask, cfg: NsConfig) -> Result<Heightmap> {
    cfg.validate()?;
    check_inputs(h, m)?;
    let (w, hh) = (h.width(), h.height());
    let masked: Vec<usize> = (0..w * hh).filter(|&i| m.bits()[i]).collect();
    if masked.is_empty() {
        return Ok(h.clone());
    }
    let (lo, hi) = known_range(h, m).ok_or(FillError::NoBoundary)?;

    // known pixels 4-adjacent to the hole seed the initial fill
    let mut boundary_sum = 0.0;
    let mut boundary_n = 0usize;
    for y in 0..hh {
        for x in 0..w {
            if m.is_masked(x, y) {
                continue;
            }
            let touches = (x > 0 && m.is_masked(x - 1, y))
                || (x + 1 < w && m.is_masked(x + 1, y))
                || (y > 0 && m.is_masked(x, y - 1))
                || (y + 1 < hh && m.is_masked(x, y + 1));
            if touches {
                boundary_sum += h.get(x, y) as f64;
                boundary_n += 1;
            }
        }
    }
    if boundary_n == 0 {
        return Err(FillError::NoBoundary);
    }
    let seed = boundary_sum / boundary_n as f64;
    let mut f = Field {
        w,
        h: hh,
        u: h.values().iter().zip(m.bits()).map(|(&v, &mk)| if mk { seed } else { v as f64 }).collect(),
    };

    // harmonic initialisation
    for _ in 0..cfg.init_sweeps {
        let mut change: f64 = 0.0;
        for &i in &masked {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let v = 0.25 * (f.at(x - 1, y) + f.at(x + 1, y) + f.at(x, y - 1) + f.at(x, y + 1));
            change = change.max((v - f.u[i]).abs());
            f.u[i] = v;
        }
        if change < cfg.convergence_eps {
            break;
        }
    }

    let kappa = 0.05 * ((hi - lo) as f64).max(f64::MIN_POSITIVE);
    let mut update = vec![0.0; masked.len()];
    for step in 0..cfg.iterations {
        let lap = f.laplacian();
        let lap_at = |x: isize, y: isize| {
            let x = x.clamp(0, w as isize - 1) as usize;
            let y = y.clamp(0, hh as isize - 1) as usize;
            lap[y * w + x]
        };
        let mut max_change: f64 = 0.0;
        for (k, &i) in masked.iter().enumerate() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let c = f.at(x, y);
            let (xb, xf) = (c - f.at(x - 1, y), f.at(x + 1, y) - c);
            let (yb, yf) = (c - f.at(x, y - 1), f.at(x, y + 1) - c);
            let ix = 0.5 * (xb + xf);
            let iy = 0.5 * (yb + yf);
            let norm = (ix * ix + iy * iy + 1e-12).sqrt();
            let dlx = 0.5 * (lap_at(x + 1, y) - lap_at(x - 1, y));
            let dly = 0.5 * (lap_at(x, y + 1) - lap_at(x, y - 1));
            // isophote direction perp(grad I) / |grad I|
            let beta = (dlx * -iy + dly * ix) / norm;
            let grad = if beta > 0.0 {
                (xb.min(0.0).powi(2) + xf.max(0.0).powi(2) + yb.min(0.0).powi(2) + yf.max(0.0).powi(2)).sqrt()
            } else {
                (xb.max(0.0).powi(2) + xf.min(0.0).powi(2) + yb.max(0.0).powi(2) + yf.min(0.0).powi(2)).sqrt()
            };
            update[k] = cfg.dt * beta * grad;
        }
        for (k, &i) in masked.iter().enumerate() {
            f.u[i] += update[k];
            max_change = max_change.max(update[k].abs());
        }

        if cfg.diffusion_weight > 0.0 && (step + 1) % cfg.diffusion_every == 0 {
            let g = |d: f64| 1.0 / (1.0 + (d / kappa).powi(2));
            for (k, &i) in masked.iter().enumerate() {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                let c = f.at(x, y);
                let flux: f64 = [f.at(x - 1, y), f.at(x + 1, y), f.at(x, y - 1), f.at(x, y + 1)]
                    .iter()
                    .map(|&n| g(n - c) * (n - c))
                    .sum();
                update[k] = cfg.dt * cfg.diffusion_weight * flux;
            }
            for (k, &i) in masked.iter().enumerate() {
                f.u[i] += update[k];
                max_change = max_change.max(update[k].abs());
            }
        }
        if !max_change.is_finite() {
            return Err(FillError::InvalidConfig(format!("scheme diverged at step {step}; reduce dt")));
        }
        if max_change < cfg.convergence_eps {
            break;
        }
    }

    let mut values = h.values().to_vec();
    for &i in &masked {
        values[i] = (f.u[i] as f32).clamp(lo, hi);
    }
    Ok(Heightmap::new(w, hh, values).expect("finite fill"))
}
