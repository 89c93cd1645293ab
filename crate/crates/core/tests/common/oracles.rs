//! Direct-definition reference implementations. Slow on purpose: no
//! neighbour search structures, no prefix sums, no fused passes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use terrafill::classical::{VariogramKind, VariogramModel};
use terrafill::grid::Heightmap;
use terrafill::maskgen::Mask;
use terrafill::rng::SeededRng;

/// Random grid of side 5..=9 with roughly a third masked and at least
/// `min_known` known pixels.
pub fn random_case(rng: &mut SeededRng, min_known: usize) -> (Heightmap, Mask) {
    let (w, h) = (rng.random_range(5..=9), rng.random_range(5..=9));
    let values: Vec<f32> = (0..w * h).map(|_| rng.random::<f32>()).collect();
    loop {
        let bits: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.35)).collect();
        let known = bits.iter().filter(|b| !**b).count();
        if known >= min_known && known < w * h {
            return (Heightmap::new(w, h, values).unwrap(), Mask::new(w, h, bits).unwrap());
        }
    }
}

fn known(h: &Heightmap, m: &Mask) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for y in 0..h.height() {
        for x in 0..h.width() {
            if !m.is_masked(x, y) {
                out.push((x, y, h.get(x, y) as f64));
            }
        }
    }
    out
}

fn dist(ax: usize, ay: usize, bx: usize, by: usize) -> f64 {
    ((ax as f64 - bx as f64).powi(2) + (ay as f64 - by as f64).powi(2)).sqrt()
}

/// Enumerate every known pixel, sort by distance (row-major order breaks
/// ties) and apply the weighted average to the first `n`.
pub fn idw(h: &Heightmap, m: &Mask, x: usize, y: usize, n: usize, p: f64) -> f64 {
    let mut pts = known(h, m);
    pts.sort_by(|a, b| dist(a.0, a.1, x, y).total_cmp(&dist(b.0, b.1, x, y)).then((a.1, a.0).cmp(&(b.1, b.0))));
    pts.truncate(n);
    let (mut num, mut den) = (0.0, 0.0);
    for (px, py, v) in pts {
        let w = dist(px, py, x, y).powf(-p);
        num += w * v;
        den += w;
    }
    num / den
}

pub fn nearest_known(h: &Heightmap, m: &Mask, x: usize, y: usize) -> f64 {
    known(h, m).into_iter().min_by(|a, b| dist(a.0, a.1, x, y).total_cmp(&dist(b.0, b.1, x, y))).unwrap().2
}

pub fn gamma(model: &VariogramModel, d: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    let r = model.range;
    let shape = match model.kind {
        VariogramKind::Linear => d,
        VariogramKind::Spherical if d < r => 1.5 * (d / r) - 0.5 * (d / r).powi(3),
        VariogramKind::Spherical => 1.0,
        VariogramKind::Exponential => 1.0 - (-3.0 * d / r).exp(),
    };
    model.nugget + model.sill * shape
}

/// Ordinary kriging over all known pixels: build the bordered system and
/// solve it with LU.
pub fn kriging(h: &Heightmap, m: &Mask, model: &VariogramModel, x: usize, y: usize) -> f64 {
    let pts = known(h, m);
    let k = pts.len();
    let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut b = DVector::<f64>::zeros(k + 1);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = gamma(model, dist(pts[i].0, pts[i].1, pts[j].0, pts[j].1));
        }
        a[(i, k)] = 1.0;
        a[(k, i)] = 1.0;
        b[i] = gamma(model, dist(pts[i].0, pts[i].1, x, y));
    }
    b[k] = 1.0;
    let sol = a.lu().solve(&b).expect("non-singular");
    (0..k).map(|i| sol[i] * pts[i].2).sum()
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub fn psnr(a: &[f64], b: &[f64]) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    -10.0 * mse.log10()
}

/// W1 as the integral of |F_a - F_b| over the merged support.
pub fn emd(a: &[f64], b: &[f64]) -> f64 {
    let mut pts: Vec<f64> = a.iter().chain(b).copied().collect();
    pts.sort_by(f64::total_cmp);
    let cdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    pts.windows(2).map(|w| (cdf(a, w[0]) - cdf(b, w[0])).abs() * (w[1] - w[0])).sum()
}

fn gaussian_1d(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let g: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// SSIM at one window origin, two-pass (means first, then centred moments),
/// with the separable Gaussian written as an outer product.
pub fn ssim_window(a: &Heightmap, b: &Heightmap, x0: usize, y0: usize, k: usize) -> f64 {
    let g = gaussian_1d(k, 1.5);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let at = |h: &Heightmap, dx: usize, dy: usize| h.get(x0 + dx, y0 + dy) as f64;
    let mut mu = (0.0, 0.0);
    for dy in 0..k {
        for dx in 0..k {
            let w = g[dx] * g[dy];
            mu.0 += w * at(a, dx, dy);
            mu.1 += w * at(b, dx, dy);
        }
    }
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for dy in 0..k {
        for dx in 0..k {
            let w = g[dx] * g[dy];
            let (da, db) = (at(a, dx, dy) - mu.0, at(b, dx, dy) - mu.1);
            va += w * da * da;
            vb += w * db * db;
            cov += w * da * db;
        }
    }
    let l = (2.0 * mu.0 * mu.1 + c1) / (mu.0 * mu.0 + mu.1 * mu.1 + c1);
    let cs = (2.0 * cov + c2) / (va + vb + c2);
    l * cs
}

pub fn ssim(a: &Heightmap, b: &Heightmap) -> f64 {
    let k = 7;
    let mut vals = Vec::new();
    for y0 in 0..=a.height() - k {
        for x0 in 0..=a.width() - k {
            vals.push(ssim_window(a, b, x0, y0, k));
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Windows with at least one masked pixel, found by scanning each window.
pub fn ssim_masked(a: &Heightmap, b: &Heightmap, m: &Mask) -> f64 {
    let k = 7;
    let mut vals = Vec::new();
    for y0 in 0..=a.height() - k {
        for x0 in 0..=a.width() - k {
            let touches = (0..k).any(|dy| (0..k).any(|dx| m.is_masked(x0 + dx, y0 + dy)));
            if touches {
                vals.push(ssim_window(a, b, x0, y0, k));
            }
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

pub fn values(h: &Heightmap) -> Vec<f64> {
    h.values().iter().map(|&v| v as f64).collect()
}
