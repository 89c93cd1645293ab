use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{make_schedule, q_sample, randn, to_model_space, DiffusionError, DiffusionSchedule, Result, VarianceKind};
use crate::grid::Heightmap;
use crate::nn::{clip_grad_norm, Adam, AdamConfig, Ema, Graph, Tensor, UNetConfig, UNetParams};
use crate::rng::derive;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub timesteps: usize,
    pub beta_1: f64,
    pub beta_t: f64,
    pub variance: VarianceKind,
    pub lr: f32,
    pub seed: u64,
    pub resolution: usize,
    /// Global gradient-norm limit; `None` disables clipping.
    pub grad_clip: Option<f32>,
    /// Weight EMA decay; `None` disables the EMA.
    pub ema_decay: Option<f32>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            timesteps: 1000,
            beta_1: 1e-4,
            beta_t: 0.02,
            variance: VarianceKind::Beta,
            lr: 2e-4,
            seed: 0,
            resolution: 128,
            grad_clip: Some(1.0),
            ema_decay: None,
        }
    }
}

impl TrainConfig {
    /// 32x32, 30 epochs.
    pub fn desk() -> Self {
        Self { epochs: 30, resolution: 32, ..Self::default() }
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        Ok(make_schedule(self.timesteps, self.beta_1, self.beta_t)?.with_variance(self.variance))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLoss {
    pub step: usize,
    pub loss: f32,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: UNetParams,
    pub ema: Option<UNetParams>,
    pub steps: Vec<StepLoss>,
    pub epochs: Vec<EpochReport>,
}

/// Minimise `E || eps - eps_theta(x_t, t) ||^2` over uniform `t` in `1..=T`.
/// `on_epoch` runs after every epoch, typically to checkpoint.
pub fn train(
    dataset: &[Heightmap],
    cfg: &TrainConfig,
    unet: &UNetConfig,
    mut on_epoch: impl FnMut(&EpochReport, &UNetParams) -> Result<()>,
) -> Result<TrainOutput> {
    if dataset.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(DiffusionError::InvalidConfig("epochs and batch size must be positive".into()));
    }
    for (index, h) in dataset.iter().enumerate() {
        if h.width() != cfg.resolution || h.height() != cfg.resolution {
            return Err(DiffusionError::ResolutionMismatch {
                index,
                expected: cfg.resolution,
                got: h.width(),
                got_h: h.height(),
            });
        }
        if h.has_nodata() {
            return Err(DiffusionError::KnownNodata(index));
        }
    }
    unet.check_size(cfg.resolution)?;
    let sched = cfg.schedule()?;
    let mut params = UNetParams::init(unet.clone(), &mut derive(cfg.seed, 0))?;
    let mut ema = cfg.ema_decay.map(|d| Ema::new(d, &params.store));
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let mut rng = derive(cfg.seed, 1);
    let data: Vec<Tensor> = dataset.iter().map(to_model_space).collect();
    let start = Instant::now();
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0;
        for batch in order.chunks(cfg.batch_size) {
            let x0 = Tensor::stack_batch(&batch.iter().map(|&i| data[i].clone()).collect::<Vec<_>>())?;
            let t: Vec<usize> = batch.iter().map(|_| rng.random_range(1..=cfg.timesteps)).collect();
            let eps = randn(x0.shape(), &mut rng);
            let mut noisy = Vec::with_capacity(batch.len());
            for (i, &ti) in t.iter().enumerate() {
                noisy.push(q_sample(&x0.batch_item(i)?, ti, &eps.batch_item(i)?, &sched)?);
            }
            let xt = Tensor::stack_batch(&noisy)?;
            let mut g = Graph::new();
            let xv = g.input(xt)?;
            let pred = params.forward_graph(&mut g, xv, &t)?;
            let target = g.input(eps)?;
            let loss = g.mse(pred, target)?;
            let value = g.value(loss).item();
            let mut grads = g.backward(loss)?;
            if let Some(c) = cfg.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            opt.step(&mut params.store, &grads)?;
            if let Some(e) = ema.as_mut() {
                e.update(&params.store);
            }
            sum += value as f64;
            count += 1;
            steps.push(StepLoss { step: steps.len() + 1, loss: value, wall_time: start.elapsed().as_secs_f64() });
        }
        let report = EpochReport { epoch, mean_loss: sum / count as f64, wall_time: start.elapsed().as_secs_f64() };
        log::info!("epoch {epoch}: mean loss {:.5}", report.mean_loss);
        epochs.push(report);
        on_epoch(&report, &params)?;
    }
    let ema = ema.map(|e| UNetParams { config: params.config.clone(), store: e.shadow });
    Ok(TrainOutput { params, ema, steps, epochs })
}

/// `step,loss,wall_time` CSV.
pub fn write_loss_csv(path: &Path, steps: &[StepLoss]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,loss,wall_time")?;
    for s in steps {
        writeln!(f, "{},{},{:.6}", s.step, s.loss, s.wall_time)?;
    }
    f.flush()?;
    Ok(())
}
