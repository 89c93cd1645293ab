use std::path::{Path, PathBuf};

use clap::Args;
use terrafill::classical::{fit_variogram, idw_fill, krige_fill, ns_inpaint, IdwConfig, NsConfig, VariogramKind};
use terrafill::config::join_list;
use terrafill::diffusion::{
    ddpm_sample, load_checkpoint, repaint_inpaint, save_checkpoint, train, write_loss_csv, Checkpoint, RepaintConfig,
    TrainConfig,
};
use terrafill::grid::{read_grid, write_grid, write_png_gray, CropBounds, Heightmap};
use terrafill::harness::{corpus_crop, run_experiment, write_reports, Corpus, DiffusionModel, Method, RunConfig};
use terrafill::maskgen::{gen_line_mask, read_pbm, write_pbm, Mask, MaskParams};
use terrafill::mesh::{heightmap_to_mesh, write_obj, DEFAULT_EXAGGERATION};
use terrafill::nn::UNetConfig;
use terrafill::rng::{derive, mix};

use crate::error::{CliError, Result};
use crate::settings::{Layer, Settings};
use crate::{Cli, Command, Global};

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Prepare(a) => prepare(&g, a),
        Command::GenMasks(a) => gen_masks(&g, a),
        Command::Train(a) => train_cmd(&g, a),
        Command::Sample(a) => sample(&g, a),
        Command::Inpaint(a) => inpaint(&g, a),
        Command::Evaluate(a) => evaluate(&g, a),
        Command::ExportMesh(a) => export_mesh(&g, a),
    }
}

fn settings(name: &str, g: &Global, defaults: Layer, flags: Layer) -> Result<Settings> {
    let s = Settings::resolve(defaults.set("seed", 0).0, g.config.as_deref(), flags.maybe("seed", g.seed).0)?;
    if g.verbose {
        s.print(name);
    }
    Ok(s)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn range<T: std::str::FromStr + Copy>(s: &Settings, key: &str) -> Result<std::ops::RangeInclusive<T>> {
    match s.list::<T>(key)?.as_slice() {
        [lo, hi] => Ok(*lo..=*hi),
        _ => Err(CliError::Data(format!("{key} must be `min,max`"))),
    }
}

fn mask_layer(l: Layer) -> Layer {
    let d = MaskParams::default();
    l.set("mask_segments", format!("{},{}", d.segments.start(), d.segments.end()))
        .set("mask_thickness", format!("{},{}", d.thickness.start(), d.thickness.end()))
        .set("mask_length", format!("{},{}", d.length.start(), d.length.end()))
}

fn mask_params(s: &Settings) -> Result<MaskParams> {
    Ok(MaskParams {
        segments: range(s, "mask_segments")?,
        thickness: range(s, "mask_thickness")?,
        length: range(s, "mask_length")?,
        ..MaskParams::default()
    })
}

fn method_layer(l: Layer) -> Layer {
    let (idw, ns, rp) = (IdwConfig::default(), NsConfig::default(), RunConfig::default().repaint);
    l.set("jump_length", rp.jump_length)
        .set("num_resamples", rp.num_resamples)
        .set("inference_steps", rp.inference_steps.map(|v| v.to_string()).unwrap_or_default())
        .set("idw_neighbors", idw.neighbors)
        .set("idw_power", idw.power)
        .set("variogram", "linear")
        .set("variogram_lags", 12)
        .set("kriging_neighbors", 64)
        .set("ns_iterations", ns.iterations)
        .set("ns_dt", ns.dt)
}

struct MethodSettings {
    repaint: RepaintConfig,
    idw: IdwConfig,
    variogram: VariogramKind,
    variogram_lags: usize,
    kriging_neighbors: usize,
    ns: NsConfig,
}

fn method_settings(s: &Settings) -> Result<MethodSettings> {
    Ok(MethodSettings {
        repaint: RepaintConfig {
            jump_length: s.get("jump_length")?,
            num_resamples: s.get("num_resamples")?,
            inference_steps: s.opt("inference_steps")?,
        },
        idw: IdwConfig { neighbors: s.get("idw_neighbors")?, power: s.get("idw_power")? },
        variogram: s.get("variogram")?,
        variogram_lags: s.get("variogram_lags")?,
        kriging_neighbors: s.get("kriging_neighbors")?,
        ns: NsConfig { iterations: s.get("ns_iterations")?, dt: s.get("ns_dt")?, ..NsConfig::default() },
    })
}

#[derive(Args)]
pub struct PrepareArgs {
    /// `synthetic` or a TIFF/HGT32 grid file.
    #[arg(long)]
    pub src: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub min_side: Option<usize>,
    #[arg(long)]
    pub max_side: Option<usize>,
}

fn prepare(g: &Global, a: PrepareArgs) -> Result<()> {
    let b = CropBounds::default();
    let defaults = Layer::default()
        .set("src", "synthetic")
        .set("count", 64)
        .set("resolution", b.target)
        .set("min_side", b.min_side)
        .set("max_side", b.max_side)
        .set("roughness", 0.55);
    let flags = Layer::default()
        .maybe("src", a.src)
        .maybe("count", a.count)
        .maybe("resolution", a.resolution)
        .maybe("min_side", a.min_side)
        .maybe("max_side", a.max_side);
    let s = settings("prepare", g, defaults, flags)?;
    let src: String = s.get("src")?;
    let corpus = if src == "synthetic" {
        Corpus::Synthetic { roughness: s.get("roughness")? }
    } else {
        Corpus::Grid(read_grid(&src).map_err(|e| CliError::Data(format!("{src}: {e}")))?)
    };
    let bounds =
        CropBounds { min_side: s.get("min_side")?, max_side: s.get("max_side")?, target: s.get("resolution")? };
    let (count, seed): (usize, u64) = (s.get("count")?, s.get("seed")?);
    create_dir(&a.out)?;
    for id in 0..count {
        let crop = corpus_crop(&corpus, bounds.target, bounds, seed, id)?;
        write_grid(&crop, a.out.join(format!("crop_{id:04}.tif")))?;
    }
    log::info!("wrote {count} crops to {}", a.out.display());
    Ok(())
}

#[derive(Args)]
pub struct GenMasksArgs {
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn gen_masks(g: &Global, a: GenMasksArgs) -> Result<()> {
    let defaults = mask_layer(Layer::default().set("count", 16).set("size", 128));
    let flags = Layer::default().maybe("count", a.count).maybe("size", a.size);
    let s = settings("gen-masks", g, defaults, flags)?;
    let (count, size, seed): (usize, usize, u64) = (s.get("count")?, s.get("size")?, s.get("seed")?);
    let params = mask_params(&s)?;
    create_dir(&a.out)?;
    for id in 0..count {
        let m = gen_line_mask(&params.clone().with_seed(mix(seed, id as u64)), size, size)?;
        write_pbm(&m, a.out.join(format!("mask_{id:04}.pbm")))?;
    }
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    /// Directory of normalized square grids.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path; `<out>.meta` and `<out>.loss.csv` are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub timesteps: Option<usize>,
}

fn grid_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            matches!(ext.as_deref(), Some("tif" | "tiff" | "hgt" | "hgt32"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train_cmd(g: &Global, a: TrainArgs) -> Result<()> {
    let (t, u) = (TrainConfig::default(), UNetConfig::default());
    let defaults = Layer::default()
        .set("epochs", t.epochs)
        .set("batch_size", t.batch_size)
        .set("timesteps", t.timesteps)
        .set("beta_1", t.beta_1)
        .set("beta_T", t.beta_t)
        .set("variance", t.variance)
        .set("lr", t.lr)
        .set("grad_clip", t.grad_clip.map(|v| v.to_string()).unwrap_or_default())
        .set("ema_decay", t.ema_decay.map(|v| v.to_string()).unwrap_or_default())
        .set("base_channels", u.base_channels)
        .set("channel_mults", join_list(&u.channel_mults))
        .set("num_res_blocks", u.num_res_blocks)
        .set("time_embed_dim", u.time_embed_dim)
        .set("attention_levels", join_list(&u.attention_levels))
        .set("groupnorm_groups", u.groupnorm_groups);
    let flags = Layer::default()
        .maybe("epochs", a.epochs)
        .maybe("batch_size", a.batch_size)
        .maybe("lr", a.lr)
        .maybe("timesteps", a.timesteps);
    let s = settings("train", g, defaults, flags)?;

    let files = grid_files(&a.data)?;
    let mut data = Vec::with_capacity(files.len());
    for f in &files {
        let h = read_grid(f).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
        if h.width() != h.height() || !h.is_normalized() {
            return Err(CliError::Data(format!("{}: expected a square grid normalized to [0, 1]", f.display())));
        }
        data.push(h);
    }
    let side = data
        .first()
        .map(Heightmap::width)
        .ok_or_else(|| CliError::Data(format!("no grids in {}", a.data.display())))?;
    let cfg = TrainConfig {
        epochs: s.get("epochs")?,
        batch_size: s.get("batch_size")?,
        timesteps: s.get("timesteps")?,
        beta_1: s.get("beta_1")?,
        beta_t: s.get("beta_T")?,
        variance: s.get("variance")?,
        lr: s.get("lr")?,
        seed: s.get("seed")?,
        resolution: side,
        grad_clip: s.opt("grad_clip")?,
        ema_decay: s.opt("ema_decay")?,
    };
    let unet = UNetConfig {
        in_channels: 1,
        base_channels: s.get("base_channels")?,
        channel_mults: s.list("channel_mults")?,
        num_res_blocks: s.get("num_res_blocks")?,
        time_embed_dim: s.get("time_embed_dim")?,
        attention_levels: s.list("attention_levels")?,
        groupnorm_groups: s.get("groupnorm_groups")?,
    };
    let out = train(&data, &cfg, &unet, |r, _| {
        log::info!("epoch {} loss {:.5} ({:.1}s)", r.epoch, r.mean_loss, r.wall_time);
        Ok(())
    })?;
    let params = out.ema.unwrap_or(out.params);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_checkpoint(&a.out, &Checkpoint::new(params, &cfg))?;
    write_loss_csv(&with_suffix(&a.out, ".loss.csv"), &out.steps)?;
    Ok(())
}

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Respace the chain to this many steps.
    #[arg(long)]
    pub steps: Option<usize>,
}

fn sample(g: &Global, a: SampleArgs) -> Result<()> {
    let defaults = Layer::default().set("count", 4).set("steps", "").set("resolution", "");
    let flags = Layer::default().maybe("count", a.count).maybe("steps", a.steps);
    let s = settings("sample", g, defaults, flags)?;
    let ckpt = load_checkpoint(&a.ckpt)?;
    let mut sched = ckpt.schedule()?;
    if let Some(steps) = s.opt::<usize>("steps")? {
        sched = sched.respace(steps)?;
    }
    let side = s.opt("resolution")?.unwrap_or(ckpt.resolution);
    let mut rng = derive(s.get("seed")?, 0);
    let samples = ddpm_sample(&ckpt.params, &sched, &mut rng, s.get("count")?, side)?;
    create_dir(&a.out)?;
    for (i, h) in samples.iter().enumerate() {
        write_grid(h, a.out.join(format!("sample_{i:04}.tif")))?;
        write_png_gray(h.values(), side, side, a.out.join(format!("sample_{i:04}.png")))?;
    }
    Ok(())
}

#[derive(Args)]
pub struct InpaintArgs {
    /// Required for `--method repaint`.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// repaint, idw, kriging or ns.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn inpaint(g: &Global, a: InpaintArgs) -> Result<()> {
    let defaults = method_layer(Layer::default().set("method", "repaint").set("ckpt", ""));
    let flags = Layer::default().maybe("method", a.method).path("ckpt", a.ckpt.as_ref());
    let s = settings("inpaint", g, defaults, flags)?;
    let method: Method = s.get::<String>("method")?.parse().map_err(CliError::Usage)?;
    let ckpt_path = s.path("ckpt");
    if method == Method::Repaint && ckpt_path.is_none() {
        return Err(CliError::Usage("--method repaint requires --ckpt <file>".into()));
    }
    let ms = method_settings(&s)?;
    let h = read_grid(&a.input).map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    let m: Mask = read_pbm(&a.mask)?;
    m.check_size(h.width(), h.height())?;
    let out = match method {
        Method::Repaint => {
            let ckpt = load_checkpoint(&ckpt_path.expect("checked above"))?;
            let sched = ckpt.schedule()?;
            let mut rng = derive(s.get("seed")?, 0);
            repaint_inpaint(&ckpt.params, &sched, &h, &m, &ms.repaint, &mut rng)?
        }
        Method::Idw => idw_fill(&h, &m, ms.idw)?,
        Method::Kriging => {
            let vg = fit_variogram(&h, &m, ms.variogram, ms.variogram_lags)?;
            krige_fill(&h, &m, vg, ms.kriging_neighbors)?
        }
        Method::NavierStokes => ns_inpaint(&h, &m, ms.ns)?,
    };
    write_grid(&out, &a.out)?;
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Comma-separated subset of repaint, idw, kriging, navier_stokes.
    #[arg(long)]
    pub methods: Option<String>,
}

fn evaluate(g: &Global, a: EvaluateArgs) -> Result<()> {
    let d = RunConfig::default();
    let names: Vec<&str> = d.methods.iter().map(|m| m.name()).collect();
    let defaults = method_layer(mask_layer(Layer::default()))
        .set("n_samples", d.n_samples)
        .set("methods", names.join(","))
        .set("resolution", d.resolution)
        .set("source", "synthetic")
        .set("roughness", 0.55)
        .set("min_side", d.crop.min_side)
        .set("max_side", d.crop.max_side)
        .set("full_metrics", d.full_metrics)
        .set("masked_metrics", d.masked_metrics)
        .set("error_maps", d.error_maps)
        .set("jobs", d.jobs)
        .set("ckpt", "");
    let flags = Layer::default()
        .path("ckpt", a.ckpt.as_ref())
        .maybe("jobs", a.jobs)
        .maybe("n_samples", a.n_samples)
        .maybe("methods", a.methods);
    let s = settings("evaluate", g, defaults, flags)?;
    let methods = s
        .list::<String>("methods")?
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(CliError::Usage)?;
    let ms = method_settings(&s)?;
    let cfg = RunConfig {
        n_samples: s.get("n_samples")?,
        seed: s.get("seed")?,
        methods,
        resolution: s.get("resolution")?,
        crop: CropBounds { min_side: s.get("min_side")?, max_side: s.get("max_side")?, target: s.get("resolution")? },
        mask: mask_params(&s)?,
        repaint: ms.repaint,
        idw: ms.idw,
        variogram: ms.variogram,
        variogram_lags: ms.variogram_lags,
        kriging_neighbors: ms.kriging_neighbors,
        ns: ms.ns,
        full_metrics: s.get("full_metrics")?,
        masked_metrics: s.get("masked_metrics")?,
        error_maps: s.get("error_maps")?,
        jobs: s.get("jobs")?,
    };
    let source: String = s.get("source")?;
    let corpus = if source == "synthetic" {
        Corpus::Synthetic { roughness: s.get("roughness")? }
    } else {
        Corpus::Grid(read_grid(&source).map_err(|e| CliError::Data(format!("{source}: {e}")))?)
    };
    let ckpt_path = s.path("ckpt");
    if cfg.methods.contains(&Method::Repaint) && ckpt_path.is_none() {
        return Err(CliError::Usage("method repaint requires --ckpt <file> (or ckpt = ... in the config)".into()));
    }
    let ckpt = ckpt_path.as_deref().map(load_checkpoint).transpose()?;
    let sched = ckpt.as_ref().map(|c| c.schedule()).transpose()?;
    let model = ckpt.as_ref().zip(sched.as_ref()).map(|(c, sc)| DiffusionModel { model: &c.params, schedule: sc });
    let run = run_experiment(&cfg, &corpus, model)?;
    let mut extra = vec![("source", source)];
    if let Some(p) = &ckpt_path {
        extra.push(("checkpoint", p.display().to_string()));
    }
    let paths = write_reports(&a.out, &cfg, &run, &extra)?;
    if !run.dropped.is_empty() {
        log::warn!("{} of {} samples dropped", run.dropped.len(), cfg.n_samples);
    }
    log::info!("summary written to {}", paths.summary_md.display());
    Ok(())
}

#[derive(Args)]
pub struct ExportMeshArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Tags masked pixels as inpainted.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub exaggeration: Option<f32>,
}

fn export_mesh(g: &Global, a: ExportMeshArgs) -> Result<()> {
    let defaults = Layer::default().set("exaggeration", DEFAULT_EXAGGERATION);
    let flags = Layer::default().maybe("exaggeration", a.exaggeration);
    let s = settings("export-mesh", g, defaults, flags)?;
    let h = read_grid(&a.input).map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    let m = a.mask.as_ref().map(read_pbm).transpose()?;
    let mesh = heightmap_to_mesh(&h, m.as_ref(), s.get("exaggeration")?)?;
    write_obj(&mesh, &a.out)?;
    Ok(())
}
