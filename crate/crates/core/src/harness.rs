//! Paired comparative evaluation: every method fills the same degraded
//! crop with the same mask, outputs are checked for known-pixel identity,
//! scored, and aggregated into CSV, Markdown and JSON reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::classical::{
    fit_variogram, idw_fill, known_pixels_preserved, krige_fill, ns_inpaint, IdwConfig, NsConfig, VariogramKind,
};
use crate::diffusion::{repaint_inpaint, DiffusionSchedule, RepaintConfig};
use crate::grid::{sample_crop, synth_terrain, write_png_gray, CropBounds, GridError, Heightmap};
use crate::maskgen::{gen_line_mask, mask_fraction, Mask, MaskParams};
use crate::metrics::MetricReport;
use crate::nn::NoisePredictor;
use crate::rng::{derive, mix};

/// CSV header of `records.csv`. `lpips` and `fid` are always empty.
pub const CSV_HEADER: &str = "sample_id,method,mask_fraction,rmse,mae,psnr,emd,ssim,rmse_masked,mae_masked,psnr_masked,emd_masked,ssim_masked,lpips,fid,wall_time";

/// Absolute errors at or above this value are drawn white in error maps.
pub const ERROR_MAP_CLIP: f32 = 0.2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no records to summarize")]
    EmptyRun,
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("method repaint needs a model")]
    MissingModel,
    #[error("sample {id}: {message}")]
    Corpus { id: usize, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Repaint,
    Idw,
    Kriging,
    NavierStokes,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Repaint, Method::Idw, Method::Kriging, Method::NavierStokes];

    pub fn name(self) -> &'static str {
        match self {
            Method::Repaint => "repaint",
            Method::Idw => "idw",
            Method::Kriging => "kriging",
            Method::NavierStokes => "navier_stokes",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Method::Repaint => "RePaint",
            Method::Idw => "IDW",
            Method::Kriging => "Kriging",
            Method::NavierStokes => "Navier-Stokes",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "repaint" => Ok(Method::Repaint),
            "idw" => Ok(Method::Idw),
            "kriging" => Ok(Method::Kriging),
            "navier_stokes" | "ns" => Ok(Method::NavierStokes),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Where evaluation crops come from.
#[derive(Clone, Debug)]
pub enum Corpus {
    /// Diamond-square terrain; each sample is a random crop of its own
    /// freshly generated field.
    Synthetic { roughness: f32 },
    /// Random crops of one source raster, bounded by `RunConfig::crop`.
    Grid(Heightmap),
}

impl Default for Corpus {
    fn default() -> Self {
        Corpus::Synthetic { roughness: 0.55 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub resolution: usize,
    /// Crop bounds for a grid corpus; `target` is overridden by `resolution`.
    pub crop: CropBounds,
    /// The seed field is replaced per sample.
    pub mask: MaskParams,
    pub repaint: RepaintConfig,
    pub idw: IdwConfig,
    pub variogram: VariogramKind,
    pub variogram_lags: usize,
    pub kriging_neighbors: usize,
    pub ns: NsConfig,
    pub full_metrics: bool,
    pub masked_metrics: bool,
    pub error_maps: bool,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_samples: 50,
            seed: 0,
            methods: Method::ALL.to_vec(),
            resolution: 32,
            crop: CropBounds::default(),
            mask: MaskParams::default(),
            repaint: RepaintConfig { jump_length: 10, num_resamples: 2, inference_steps: Some(100) },
            idw: IdwConfig::default(),
            variogram: VariogramKind::Linear,
            variogram_lags: 12,
            kriging_neighbors: 64,
            ns: NsConfig::default(),
            full_metrics: true,
            masked_metrics: true,
            error_maps: true,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.into()));
        if self.n_samples == 0 {
            return bad("n_samples must be >= 1");
        }
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("duplicate method");
        }
        if self.resolution < 8 {
            return bad("resolution must be >= 8");
        }
        if self.jobs == 0 {
            return bad("jobs must be >= 1");
        }
        Ok(())
    }
}

/// A trained denoiser and the schedule it was trained with.
#[derive(Clone, Copy)]
pub struct DiffusionModel<'a> {
    pub model: &'a dyn NoisePredictor,
    pub schedule: &'a DiffusionSchedule,
}

/// Ground truth, mask and degraded input (NaN where masked) for one sample.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: usize,
    pub truth: Heightmap,
    pub mask: Mask,
    pub degraded: Heightmap,
}

/// Smallest `2^k + 1` that is at least twice `resolution`.
fn synth_side(resolution: usize) -> usize {
    (2 * resolution - 1).next_power_of_two() + 1
}

/// One normalized `resolution x resolution` crop, determined by
/// `(seed, id)`.
pub fn corpus_crop(corpus: &Corpus, resolution: usize, crop: CropBounds, seed: u64, id: usize) -> Result<Heightmap> {
    let mut rng = derive(seed, id as u64);
    let to_err = |e: GridError| HarnessError::Corpus { id, message: e.to_string() };
    match corpus {
        Corpus::Synthetic { roughness } => {
            let side = synth_side(resolution);
            let field = synth_terrain(&mut rng, side, *roughness).map_err(to_err)?;
            let bounds = CropBounds { min_side: resolution, max_side: side, target: resolution };
            Ok(sample_crop(&field, &mut rng, bounds, 100).map_err(to_err)?.heightmap)
        }
        Corpus::Grid(src) => {
            let bounds = CropBounds { target: resolution, ..crop };
            Ok(sample_crop(src, &mut rng, bounds, 100).map_err(to_err)?.heightmap)
        }
    }
}

/// `n` synthetic training terrains; disjoint from evaluation crops as long
/// as the two seeds differ.
pub fn synthetic_dataset(n: usize, resolution: usize, seed: u64) -> Result<Vec<Heightmap>> {
    let corpus = Corpus::default();
    (0..n).map(|id| corpus_crop(&corpus, resolution, CropBounds::default(), seed, id)).collect()
}

pub fn make_sample(cfg: &RunConfig, corpus: &Corpus, id: usize) -> Result<Sample> {
    let truth = corpus_crop(corpus, cfg.resolution, cfg.crop, cfg.seed, id)?;
    let mask_seed: u64 = derive(mix(cfg.seed, id as u64), 1).random();
    let params = cfg.mask.clone().with_seed(mask_seed);
    let mask = gen_line_mask(&params, cfg.resolution, cfg.resolution)
        .map_err(|e| HarnessError::Corpus { id, message: e.to_string() })?;
    let values = truth.values().iter().zip(mask.bits()).map(|(&v, &m)| if m { f32::NAN } else { v }).collect();
    let degraded = Heightmap::new(cfg.resolution, cfg.resolution, values)?;
    Ok(Sample { id, truth, mask, degraded })
}

/// Run one method on a sample. Errors are returned as text because the
/// harness only logs them.
pub fn run_method(
    method: Method,
    cfg: &RunConfig,
    sample: &Sample,
    model: Option<DiffusionModel<'_>>,
) -> std::result::Result<Heightmap, String> {
    let (h, m) = (&sample.degraded, &sample.mask);
    let s = |e: &dyn std::fmt::Display| e.to_string();
    match method {
        Method::Repaint => {
            let dm = model.ok_or_else(|| HarnessError::MissingModel.to_string())?;
            let mut rng = derive(mix(cfg.seed, sample.id as u64), 2);
            repaint_inpaint(dm.model, dm.schedule, h, m, &cfg.repaint, &mut rng).map_err(|e| s(&e))
        }
        Method::Idw => idw_fill(h, m, cfg.idw).map_err(|e| s(&e)),
        Method::Kriging => {
            let vg = fit_variogram(h, m, cfg.variogram, cfg.variogram_lags).map_err(|e| s(&e))?;
            krige_fill(h, m, vg, cfg.kriging_neighbors).map_err(|e| s(&e))
        }
        Method::NavierStokes => ns_inpaint(h, m, cfg.ns).map_err(|e| s(&e)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub sample_id: usize,
    pub method: Method,
    pub mask_fraction: f64,
    pub full: Option<MetricReport>,
    pub masked: Option<MetricReport>,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct SampleOutcome {
    pub sample: Sample,
    /// In `cfg.methods` order; empty if the sample was dropped.
    pub outputs: Vec<(Method, Heightmap)>,
    pub records: Vec<EvalRecord>,
    pub failure: Option<String>,
}

fn evaluate_sample(
    cfg: &RunConfig,
    corpus: &Corpus,
    model: Option<DiffusionModel<'_>>,
    id: usize,
) -> Result<SampleOutcome> {
    let sample = make_sample(cfg, corpus, id)?;
    let frac = mask_fraction(&sample.mask);
    let mut outputs = Vec::new();
    let mut records = Vec::new();
    let mut failure = None;
    for &method in &cfg.methods {
        let start = Instant::now();
        let result = run_method(method, cfg, &sample, model);
        let wall_time = start.elapsed().as_secs_f64();
        let out = match result {
            Ok(out) if !known_pixels_preserved(&sample.truth, &out, &sample.mask) => {
                failure = Some(format!("{method}: known pixels changed"));
                break;
            }
            Ok(out) if out.has_nodata() => {
                failure = Some(format!("{method}: output contains nodata"));
                break;
            }
            Ok(out) => out,
            Err(e) => {
                failure = Some(format!("{method}: {e}"));
                break;
            }
        };
        let scores = (
            cfg.full_metrics.then(|| MetricReport::full(&sample.truth, &out)).transpose(),
            if cfg.masked_metrics { MetricReport::masked(&sample.truth, &out, &sample.mask) } else { Ok(None) },
        );
        match scores {
            (Ok(full), Ok(masked)) => {
                records.push(EvalRecord { sample_id: id, method, mask_fraction: frac, full, masked, wall_time });
                outputs.push((method, out));
            }
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(format!("{method}: scoring failed: {e}"));
                break;
            }
        }
    }
    if let Some(reason) = &failure {
        log::warn!("dropping sample {id}: {reason}");
        outputs.clear();
        records.clear();
    }
    Ok(SampleOutcome { sample, outputs, records, failure })
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<EvalRecord>,
    pub dropped: Vec<(usize, String)>,
    pub outcomes: Vec<SampleOutcome>,
}

/// Evaluate `cfg.n_samples` samples. Samples are spread over `cfg.jobs`
/// threads; every sample draws from its own RNG streams so the result does
/// not depend on scheduling.
pub fn run_experiment(cfg: &RunConfig, corpus: &Corpus, model: Option<DiffusionModel<'_>>) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.methods.contains(&Method::Repaint) && model.is_none() {
        return Err(HarnessError::MissingModel);
    }
    let jobs = cfg.jobs.min(cfg.n_samples);
    let mut outcomes: Vec<Result<SampleOutcome>> = if jobs == 1 {
        (0..cfg.n_samples).map(|id| evaluate_sample(cfg, corpus, model, id)).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|w| {
                    scope.spawn(move || {
                        (w..cfg.n_samples)
                            .step_by(jobs)
                            .map(|id| (id, evaluate_sample(cfg, corpus, model, id)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            let mut all: Vec<(usize, Result<SampleOutcome>)> =
                handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect();
            all.sort_by_key(|(id, _)| *id);
            all.into_iter().map(|(_, r)| r).collect()
        })
    };
    let mut out = RunOutput { records: Vec::new(), dropped: Vec::new(), outcomes: Vec::with_capacity(cfg.n_samples) };
    for o in outcomes.drain(..) {
        let o = o?;
        if let Some(reason) = &o.failure {
            out.dropped.push((o.sample.id, reason.clone()));
        }
        out.records.extend(o.records.iter().cloned());
        out.outcomes.push(o);
    }
    log::info!("evaluated {} samples, dropped {}", cfg.n_samples - out.dropped.len(), out.dropped.len());
    Ok(out)
}

/// Mean of each metric; `None` when the scope was not computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricMeans {
    pub rmse: f64,
    pub mae: f64,
    pub psnr: f64,
    pub emd: f64,
    pub ssim: f64,
}

impl MetricMeans {
    fn of(reports: &[MetricReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(Self {
            rmse: mean(|r| r.rmse),
            mae: mean(|r| r.mae),
            psnr: mean(|r| r.psnr),
            emd: mean(|r| r.emd),
            ssim: mean(|r| r.ssim),
        })
    }

    fn fields(&self) -> [f64; 5] {
        [self.rmse, self.mae, self.psnr, self.emd, self.ssim]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub n: usize,
    pub full: Option<MetricMeans>,
    pub masked: Option<MetricMeans>,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    /// Deltas are relative to this method (RePaint when present).
    pub reference: Method,
    pub rows: Vec<MethodSummary>,
}

/// Signed percentage change of `value` against `reference`, one decimal,
/// e.g. `+14.9%`. Plain arithmetic for every metric, PSNR included.
pub fn percent_delta(value: f64, reference: f64) -> String {
    let d = (value - reference) / reference * 100.0;
    if !d.is_finite() {
        return "n/a".into();
    }
    // avoid printing "-0.0%"
    let d = if (d * 10.0).round() == 0.0 { 0.0 } else { d };
    format!("{d:+.1}%")
}

pub fn summarize(records: &[EvalRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(HarnessError::EmptyRun);
    }
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let rows = methods
        .iter()
        .map(|&method| {
            let mine: Vec<&EvalRecord> = records.iter().filter(|r| r.method == method).collect();
            let full: Vec<MetricReport> = mine.iter().filter_map(|r| r.full).collect();
            let masked: Vec<MetricReport> = mine.iter().filter_map(|r| r.masked).collect();
            MethodSummary {
                method,
                n: mine.len(),
                full: MetricMeans::of(&full),
                masked: MetricMeans::of(&masked),
                wall_time: mine.iter().map(|r| r.wall_time).sum::<f64>() / mine.len() as f64,
            }
        })
        .collect();
    let reference = if methods.contains(&Method::Repaint) { Method::Repaint } else { methods[0] };
    Ok(Summary { reference, rows })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn records_csv(records: &[EvalRecord]) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let full = r.full.map(|m| [m.rmse, m.mae, m.psnr, m.emd, m.ssim]);
        let masked = r.masked.map(|m| [m.rmse, m.mae, m.psnr, m.emd, m.ssim]);
        let _ = write!(s, "{},{},{}", r.sample_id, r.method, r.mask_fraction);
        for i in 0..5 {
            let _ = write!(s, ",{}", opt(full.map(|f| f[i])));
        }
        for i in 0..5 {
            let _ = write!(s, ",{}", opt(masked.map(|f| f[i])));
        }
        let _ = writeln!(s, ",,,{}", r.wall_time);
    }
    s
}

impl Summary {
    fn row(&self, m: Method) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == m)
    }

    pub fn markdown(&self, n_requested: usize, dropped: usize) -> String {
        let mut s = String::from("# Evaluation summary\n\n");
        let n = self.rows.first().map_or(0, |r| r.n);
        let _ = writeln!(s, "Samples evaluated: {n} of {n_requested} ({dropped} dropped).");
        let _ = writeln!(s, "Percentages are relative to {}.\n", self.reference.label());
        let reference = self.row(self.reference);
        for (title, pick) in [
            ("Masked region", (|r: &MethodSummary| r.masked) as fn(&MethodSummary) -> Option<MetricMeans>),
            ("Full image", |r: &MethodSummary| r.full),
        ] {
            if self.rows.iter().all(|r| pick(r).is_none()) {
                continue;
            }
            let _ = writeln!(s, "## {title}\n");
            s.push_str("| Method | RMSE | MAE | PSNR | EMD | SSIM |\n|---|---|---|---|---|---|\n");
            let ref_means = reference.and_then(pick);
            for row in &self.rows {
                let Some(means) = pick(row) else { continue };
                let _ = write!(s, "| {}", row.method.label());
                for (i, v) in means.fields().iter().enumerate() {
                    match ref_means {
                        Some(r) if row.method != self.reference => {
                            let _ = write!(s, " | {v:.4} ({})", percent_delta(*v, r.fields()[i]));
                        }
                        _ => {
                            let _ = write!(s, " | {v:.4}");
                        }
                    }
                }
                s.push_str(" |\n");
            }
            s.push('\n');
        }
        s.push_str("## Mean wall time per sample\n\n| Method | Seconds |\n|---|---|\n");
        for row in &self.rows {
            let _ = writeln!(s, "| {} | {:.4} |", row.method.label(), row.wall_time);
        }
        s
    }

    /// Full-precision means, for tools that re-check the Markdown table.
    pub fn to_json(&self) -> serde_json::Value {
        let means = |m: Option<MetricMeans>| match m {
            None => serde_json::Value::Null,
            Some(m) => serde_json::json!({
                "rmse": m.rmse, "mae": m.mae, "psnr": finite_or_string(m.psnr), "emd": m.emd, "ssim": m.ssim,
            }),
        };
        serde_json::json!({
            "reference": self.reference.name(),
            "methods": self.rows.iter().map(|r| serde_json::json!({
                "method": r.method.name(),
                "n": r.n,
                "full": means(r.full),
                "masked": means(r.masked),
                "wall_time": r.wall_time,
            })).collect::<Vec<_>>(),
        })
    }
}

fn finite_or_string(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::json!(v.to_string())
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn manifest(cfg: &RunConfig, extra: &[(&str, String)]) -> serde_json::Value {
    let mut m = serde_json::json!({
        "seed": cfg.seed,
        "git_describe": git_describe(),
        "config": {
            "n_samples": cfg.n_samples,
            "methods": cfg.methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "resolution": cfg.resolution,
            "crop": { "min_side": cfg.crop.min_side, "max_side": cfg.crop.max_side },
            "mask": {
                "segments": [cfg.mask.segments.start(), cfg.mask.segments.end()],
                "thickness": [cfg.mask.thickness.start(), cfg.mask.thickness.end()],
                "orientation": [cfg.mask.orientation.start(), cfg.mask.orientation.end()],
                "length": [cfg.mask.length.start(), cfg.mask.length.end()],
            },
            "repaint": {
                "jump_length": cfg.repaint.jump_length,
                "num_resamples": cfg.repaint.num_resamples,
                "inference_steps": cfg.repaint.inference_steps,
            },
            "idw": { "neighbors": cfg.idw.neighbors, "power": cfg.idw.power },
            "kriging": {
                "variogram": format!("{:?}", cfg.variogram).to_lowercase(),
                "lags": cfg.variogram_lags,
                "max_neighbors": cfg.kriging_neighbors,
            },
            "navier_stokes": {
                "iterations": cfg.ns.iterations,
                "dt": cfg.ns.dt,
                "diffusion_weight": cfg.ns.diffusion_weight,
                "convergence_eps": cfg.ns.convergence_eps,
                "diffusion_every": cfg.ns.diffusion_every,
                "init_sweeps": cfg.ns.init_sweeps,
            },
            "full_metrics": cfg.full_metrics,
            "masked_metrics": cfg.masked_metrics,
            "jobs": cfg.jobs,
        },
    });
    for (k, v) in extra {
        m[*k] = serde_json::json!(v);
    }
    m
}

/// Gray PNG of `|truth - out|`, linear up to `ERROR_MAP_CLIP`.
pub fn write_error_map(truth: &Heightmap, out: &Heightmap, path: &Path) -> Result<()> {
    let values: Vec<f32> = truth
        .values()
        .iter()
        .zip(out.values())
        .map(|(a, b)| (a - b).abs().min(ERROR_MAP_CLIP) / ERROR_MAP_CLIP)
        .collect();
    write_png_gray(&values, truth.width(), truth.height(), path)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub summary_md: PathBuf,
    pub summary_json: PathBuf,
    pub manifest: PathBuf,
}

/// Write `records.csv`, `summary.md`, `summary.json`, `manifest.json` and,
/// if enabled, `error_maps/<sample>_<method>.png` into `dir`.
pub fn write_reports(
    dir: &Path,
    cfg: &RunConfig,
    run: &RunOutput,
    extra_manifest: &[(&str, String)],
) -> Result<ReportPaths> {
    std::fs::create_dir_all(dir)?;
    let summary = summarize(&run.records)?;
    let paths = ReportPaths {
        csv: dir.join("records.csv"),
        summary_md: dir.join("summary.md"),
        summary_json: dir.join("summary.json"),
        manifest: dir.join("manifest.json"),
    };
    std::fs::write(&paths.csv, records_csv(&run.records))?;
    std::fs::write(&paths.summary_md, summary.markdown(cfg.n_samples, run.dropped.len()))?;
    std::fs::write(&paths.summary_json, serde_json::to_string_pretty(&summary.to_json())?)?;
    let mut man = manifest(cfg, extra_manifest);
    man["dropped"] = serde_json::json!(run
        .dropped
        .iter()
        .map(|(id, why)| serde_json::json!({"sample_id": id, "reason": why}))
        .collect::<Vec<_>>());
    std::fs::write(&paths.manifest, serde_json::to_string_pretty(&man)?)?;
    if cfg.error_maps {
        let maps = dir.join("error_maps");
        std::fs::create_dir_all(&maps)?;
        for o in &run.outcomes {
            for (method, out) in &o.outputs {
                write_error_map(&o.sample.truth, out, &maps.join(format!("{:04}_{method}.png", o.sample.id)))?;
            }
        }
    }
    Ok(paths)
}
