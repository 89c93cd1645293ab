//! Reconstruction metrics on `[0, 1]` heightmaps: RMSE, MAE, PSNR, EMD
//! (1-D Wasserstein-1) and Gaussian-windowed SSIM. All arithmetic is f64.

use thiserror::Error;

use crate::grid::Heightmap;
use crate::maskgen::Mask;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("window {window} does not fit a {width}x{height} image")]
    WindowTooLarge { window: usize, width: usize, height: usize },
    #[error("window must be odd and positive, got {0}")]
    InvalidWindow(usize),
    #[error("no pixels to compare")]
    Empty,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check(a: &Heightmap, b: &Heightmap) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

fn pairs<'a>(a: &'a Heightmap, b: &'a Heightmap, m: Option<&'a Mask>) -> impl Iterator<Item = (f64, f64)> + 'a {
    a.values()
        .iter()
        .zip(b.values())
        .enumerate()
        .filter(move |(i, _)| m.is_none_or(|m| m.bits()[*i]))
        .map(|(_, (&x, &y))| (x as f64, y as f64))
}

fn mse_of(it: impl Iterator<Item = (f64, f64)>) -> Result<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for (x, y) in it {
        s += (x - y) * (x - y);
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(s / n as f64)
}

fn mae_of(it: impl Iterator<Item = (f64, f64)>) -> Result<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for (x, y) in it {
        s += (x - y).abs();
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(s / n as f64)
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn emd_of(it: impl Iterator<Item = (f64, f64)>) -> Result<f64> {
    let (mut xs, mut ys): (Vec<f64>, Vec<f64>) = it.unzip();
    if xs.is_empty() {
        return Err(MetricsError::Empty);
    }
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    Ok(xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).sum::<f64>() / xs.len() as f64)
}

pub fn rmse(a: &Heightmap, b: &Heightmap) -> Result<f64> {
    check(a, b)?;
    mse_of(pairs(a, b, None)).map(f64::sqrt)
}

pub fn mae(a: &Heightmap, b: &Heightmap) -> Result<f64> {
    check(a, b)?;
    mae_of(pairs(a, b, None))
}

/// `10 log10(peak^2 / mse)`, `+inf` for identical inputs.
pub fn psnr(a: &Heightmap, b: &Heightmap, peak: f64) -> Result<f64> {
    check(a, b)?;
    Ok(psnr_from_mse(mse_of(pairs(a, b, None))?, peak))
}

/// Mean absolute difference of the sorted values.
pub fn emd(a: &Heightmap, b: &Heightmap) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MetricsError::ShapeMismatch(format!("{} vs {} pixels", a.len(), b.len())));
    }
    emd_of(a.values().iter().zip(b.values()).map(|(&x, &y)| (x as f64, y as f64)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L`.
    pub range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 7, sigma: 1.5, k1: 0.01, k2: 0.03, range: 1.0 }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let (dx, dy) = ((i % size) as f64 - c, (i / size) as f64 - c);
            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// SSIM at every window fully inside the image, row-major over the
/// `(w - k + 1) x (h - k + 1)` window origins.
pub fn ssim_map(a: &Heightmap, b: &Heightmap, p: &SsimParams) -> Result<Vec<f64>> {
    check(a, b)?;
    let k = p.window;
    if k == 0 || k.is_multiple_of(2) {
        return Err(MetricsError::InvalidWindow(k));
    }
    let (w, h) = (a.width(), a.height());
    if k > w || k > h {
        return Err(MetricsError::WindowTooLarge { window: k, width: w, height: h });
    }
    let g = gaussian_window(k, p.sigma);
    let c1 = (p.k1 * p.range).powi(2);
    let c2 = (p.k2 * p.range).powi(2);
    let (av, bv) = (a.values(), b.values());
    let mut out = Vec::with_capacity((w - k + 1) * (h - k + 1));
    for y0 in 0..=h - k {
        for x0 in 0..=w - k {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..k {
                for dx in 0..k {
                    let i = (y0 + dy) * w + x0 + dx;
                    let wt = g[dy * k + dx];
                    let (x, y) = (av[i] as f64, bv[i] as f64);
                    ma += wt * x;
                    mb += wt * y;
                    saa += wt * x * x;
                    sbb += wt * y * y;
                    sab += wt * x * y;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            out.push(((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)));
        }
    }
    Ok(out)
}

pub fn ssim(a: &Heightmap, b: &Heightmap, p: &SsimParams) -> Result<f64> {
    let m = ssim_map(a, b, p)?;
    Ok(m.iter().sum::<f64>() / m.len() as f64)
}

/// Mean SSIM over the windows that contain at least one masked pixel.
pub fn ssim_masked(a: &Heightmap, b: &Heightmap, mask: &Mask, p: &SsimParams) -> Result<f64> {
    let map = ssim_map(a, b, p)?;
    let k = p.window;
    let (w, h) = (a.width(), a.height());
    let ow = w - k + 1;
    // 2-D prefix count of masked pixels for O(1) window queries
    let mut pre = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            pre[(y + 1) * (w + 1) + x + 1] =
                mask.is_masked(x, y) as u32 + pre[y * (w + 1) + x + 1] + pre[(y + 1) * (w + 1) + x]
                    - pre[y * (w + 1) + x];
        }
    }
    let count = |x0: usize, y0: usize| {
        let (x1, y1) = (x0 + k, y0 + k);
        pre[y1 * (w + 1) + x1] + pre[y0 * (w + 1) + x0] - pre[y0 * (w + 1) + x1] - pre[y1 * (w + 1) + x0]
    };
    let (mut s, mut n) = (0.0, 0usize);
    for (i, v) in map.iter().enumerate() {
        if count(i % ow, i / ow) > 0 {
            s += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(s / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    pub psnr: f64,
    pub emd: f64,
    pub ssim: f64,
}

impl MetricReport {
    /// All metrics over the full raster.
    pub fn full(truth: &Heightmap, recon: &Heightmap) -> Result<Self> {
        check(truth, recon)?;
        let mse = mse_of(pairs(truth, recon, None))?;
        Ok(Self {
            rmse: mse.sqrt(),
            mae: mae_of(pairs(truth, recon, None))?,
            psnr: psnr_from_mse(mse, 1.0),
            emd: emd_of(pairs(truth, recon, None))?,
            ssim: ssim(truth, recon, &SsimParams::default())?,
        })
    }

    /// Metrics restricted to masked pixels; SSIM averages the windows that
    /// touch the mask. `None` for an empty mask.
    pub fn masked(truth: &Heightmap, recon: &Heightmap, mask: &Mask) -> Result<Option<Self>> {
        check(truth, recon)?;
        mask.check_size(truth.width(), truth.height()).map_err(|e| MetricsError::ShapeMismatch(e.to_string()))?;
        if mask.masked_count() == 0 {
            return Ok(None);
        }
        let mse = mse_of(pairs(truth, recon, Some(mask)))?;
        Ok(Some(Self {
            rmse: mse.sqrt(),
            mae: mae_of(pairs(truth, recon, Some(mask)))?,
            psnr: psnr_from_mse(mse, 1.0),
            emd: emd_of(pairs(truth, recon, Some(mask)))?,
            ssim: ssim_masked(truth, recon, mask, &SsimParams::default())?,
        }))
    }
}
