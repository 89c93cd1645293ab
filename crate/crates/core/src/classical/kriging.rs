//! Ordinary kriging with an isotropic semivariogram.

use super::linalg::solve_dense;
use super::neighbors::{KnownPoint, NeighborIndex};
use super::{check_inputs, fill_masked, known_range, FillError, Result};
use crate::grid::Heightmap;
use crate::maskgen::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariogramKind {
    Linear,
    Spherical,
    Exponential,
}

impl std::str::FromStr for VariogramKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(Self::Linear),
            "spherical" => Ok(Self::Spherical),
            "exponential" => Ok(Self::Exponential),
            other => Err(format!("unknown variogram model `{other}`")),
        }
    }
}

/// `sill` is the slope for the linear model and the partial sill otherwise.
/// `range` is ignored by the linear model; the exponential model reaches
/// ~95% of its sill at `range`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariogramModel {
    pub kind: VariogramKind,
    pub nugget: f64,
    pub sill: f64,
    pub range: f64,
}

impl VariogramModel {
    pub fn linear(nugget: f64, slope: f64) -> Self {
        Self { kind: VariogramKind::Linear, nugget, sill: slope, range: 1.0 }
    }

    /// Semivariance at lag `d`; zero at zero lag, nugget applies for `d > 0`.
    pub fn gamma(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        self.nugget + self.sill * shape(self.kind, d, self.range)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.nugget >= 0.0
            && self.sill >= 0.0
            && self.nugget.is_finite()
            && self.sill.is_finite()
            && (self.kind == VariogramKind::Linear || (self.range > 0.0 && self.range.is_finite()));
        if ok {
            Ok(())
        } else {
            Err(FillError::InvalidConfig(format!("variogram {self:?}")))
        }
    }
}

fn shape(kind: VariogramKind, d: f64, range: f64) -> f64 {
    match kind {
        VariogramKind::Linear => d,
        VariogramKind::Spherical => {
            if d >= range {
                1.0
            } else {
                let r = d / range;
                1.5 * r - 0.5 * r * r * r
            }
        }
        VariogramKind::Exponential => 1.0 - (-3.0 * d / range).exp(),
    }
}

/// Binned semivariance: `gamma[i]` is the mean of `0.5 (v_a - v_b)^2` over
/// pairs whose distance falls in bin `i` of `n_lags` equal-width bins on
/// `(0, max distance]`. Empty bins are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalVariogram {
    pub lags: Vec<f64>,
    pub gamma: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Above this many known pixels the variogram uses an evenly strided subset.
const MAX_VARIOGRAM_POINTS: usize = 3000;

fn known_points(h: &Heightmap, m: &Mask) -> Vec<(f64, f64, f64)> {
    let w = h.width();
    h.values()
        .iter()
        .zip(m.bits())
        .enumerate()
        .filter(|(_, (_, &masked))| !masked)
        .map(|(i, (&v, _))| ((i % w) as f64, (i / w) as f64, v as f64))
        .collect()
}

pub fn empirical_variogram(h: &Heightmap, m: &Mask, n_lags: usize) -> Result<EmpiricalVariogram> {
    check_inputs(h, m)?;
    if n_lags == 0 {
        return Err(FillError::InvalidConfig("n_lags must be >= 1".into()));
    }
    let mut pts = known_points(h, m);
    if pts.len() < 10 {
        return Err(FillError::InsufficientKnown { needed: 10, have: pts.len() });
    }
    if pts.len() > MAX_VARIOGRAM_POINTS {
        let stride = pts.len().div_ceil(MAX_VARIOGRAM_POINTS);
        pts = pts.into_iter().step_by(stride).collect();
    }
    let dist = |a: &(f64, f64, f64), b: &(f64, f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut dmax: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            dmax = dmax.max(dist(a, b));
        }
    }
    let width = dmax / n_lags as f64;
    let mut sums = vec![0.0; n_lags];
    let mut counts = vec![0usize; n_lags];
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let bin = ((dist(a, b) / width) as usize).min(n_lags - 1);
            sums[bin] += 0.5 * (a.2 - b.2).powi(2);
            counts[bin] += 1;
        }
    }
    let mut out = EmpiricalVariogram { lags: Vec::new(), gamma: Vec::new(), counts: Vec::new() };
    for i in 0..n_lags {
        if counts[i] > 0 {
            out.lags.push((i as f64 + 0.5) * width);
            out.gamma.push(sums[i] / counts[i] as f64);
            out.counts.push(counts[i]);
        }
    }
    Ok(out)
}

/// Non-negative least squares for `y = a + b f` in two unknowns.
fn fit_affine_nonneg(f: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = f.len() as f64;
    let sse = |a: f64, b: f64| f.iter().zip(y).map(|(fi, yi)| (yi - a - b * fi).powi(2)).sum::<f64>();
    let (sf, sy) = (f.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sff = f.iter().map(|v| v * v).sum::<f64>();
    let sfy = f.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let det = n * sff - sf * sf;
    let mut candidates = Vec::with_capacity(3);
    if det.abs() > 1e-300 {
        let b = (n * sfy - sf * sy) / det;
        let a = (sy - b * sf) / n;
        if a >= 0.0 && b >= 0.0 {
            candidates.push((a, b));
        }
    }
    if sff > 0.0 {
        candidates.push((0.0, (sfy / sff).max(0.0)));
    }
    candidates.push(((sy / n).max(0.0), 0.0));
    candidates.into_iter().map(|(a, b)| (a, b, sse(a, b))).min_by(|x, y| x.2.total_cmp(&y.2)).unwrap()
}

/// Fit `kind` to the empirical semivariogram by least squares on bin
/// centres. Nugget and sill are constrained non-negative; for bounded models
/// the range is chosen by a grid search.
pub fn fit_variogram(h: &Heightmap, m: &Mask, kind: VariogramKind, n_lags: usize) -> Result<VariogramModel> {
    let ev = empirical_variogram(h, m, n_lags)?;
    Ok(fit_to_empirical(&ev, kind))
}

pub(crate) fn fit_to_empirical(ev: &EmpiricalVariogram, kind: VariogramKind) -> VariogramModel {
    match kind {
        VariogramKind::Linear => {
            let (nugget, slope, _) = fit_affine_nonneg(&ev.lags, &ev.gamma);
            VariogramModel::linear(nugget, slope)
        }
        _ => {
            let lo = ev.lags.first().copied().unwrap_or(1.0);
            let hi = 2.0 * ev.lags.last().copied().unwrap_or(1.0);
            const STEPS: usize = 64;
            (0..STEPS)
                .map(|i| lo + (hi - lo) * i as f64 / (STEPS - 1) as f64)
                .map(|range| {
                    let f: Vec<f64> = ev.lags.iter().map(|&d| shape(kind, d, range)).collect();
                    let (nugget, sill, sse) = fit_affine_nonneg(&f, &ev.gamma);
                    (VariogramModel { kind, nugget, sill, range }, sse)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(m, _)| m)
                .unwrap()
        }
    }
}

const JITTER: f64 = 1e-10;

/// Ordinary kriging estimates at arbitrary pixels from the nearest known
/// pixels. Estimates are clamped to the range of known values.
pub struct KrigingPredictor<'a> {
    index: NeighborIndex<'a>,
    model: VariogramModel,
    max_neighbors: usize,
    range: (f64, f64),
}

impl<'a> KrigingPredictor<'a> {
    pub fn new(h: &'a Heightmap, m: &'a Mask, model: VariogramModel, max_neighbors: usize) -> Result<Self> {
        check_inputs(h, m)?;
        model.validate()?;
        if max_neighbors < 1 {
            return Err(FillError::InvalidConfig("max_neighbors must be >= 1".into()));
        }
        let index = NeighborIndex::new(h, m);
        if index.known_count() < 3 {
            return Err(FillError::InsufficientKnown { needed: 3, have: index.known_count() });
        }
        let (lo, hi) = known_range(h, m).expect("known pixels exist");
        Ok(Self { index, model, max_neighbors, range: (lo as f64, hi as f64) })
    }

    /// Kriging weights for `points` around the target (distances in
    /// `dist2`), Lagrange multiplier excluded.
    pub fn weights(&self, points: &[KnownPoint]) -> Result<Vec<f64>> {
        let k = points.len();
        let n = k + 1;
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            for (j, q) in points.iter().enumerate() {
                let d = ((p.x as f64 - q.x as f64).powi(2) + (p.y as f64 - q.y as f64).powi(2)).sqrt();
                a[i * n + j] = self.model.gamma(d);
            }
            a[i * n + k] = 1.0;
            a[k * n + i] = 1.0;
            b[i] = self.model.gamma((p.dist2 as f64).sqrt());
        }
        b[k] = 1.0;
        let sol = match solve_dense(&a, &b) {
            Some(s) => s,
            None => {
                for i in 0..k {
                    a[i * n + i] += JITTER;
                }
                solve_dense(&a, &b).ok_or(FillError::SingularSystem)?
            }
        };
        Ok(sol[..k].to_vec())
    }

    /// The estimate at `(x, y)` before clamping.
    pub fn raw_estimate(&self, x: usize, y: usize) -> Result<f64> {
        let pts = self.index.nearest(x, y, self.max_neighbors);
        let w = self.weights(&pts)?;
        Ok(w.iter().zip(&pts).map(|(wi, p)| wi * p.value).sum())
    }

    pub fn predict(&self, x: usize, y: usize) -> Result<f64> {
        Ok(self.raw_estimate(x, y)?.clamp(self.range.0, self.range.1))
    }
}

/// Fill masked pixels by ordinary kriging over the `max_neighbors` nearest
/// known pixels.
pub fn krige_fill(h: &Heightmap, m: &Mask, model: VariogramModel, max_neighbors: usize) -> Result<Heightmap> {
    let predictor = KrigingPredictor::new(h, m, model, max_neighbors)?;
    fill_masked(h, m, |x, y| predictor.predict(x, y).map(|v| v as f32))
}
