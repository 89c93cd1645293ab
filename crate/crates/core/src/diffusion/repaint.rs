//! RePaint: reverse diffusion where known pixels are replaced by the
//! forward-noised ground truth after each step, with periodic jumps back up
//! the chain to harmonise the generated content.

use rand::Rng;

use super::{randn, reverse_step, to_model_space, DiffusionError, DiffusionSchedule, Result};
use crate::grid::Heightmap;
use crate::maskgen::Mask;
use crate::nn::{NoisePredictor, Tensor};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepaintConfig {
    pub jump_length: usize,
    pub num_resamples: usize,
    /// Respace the schedule to this many steps; `None` runs the full chain.
    pub inference_steps: Option<usize>,
}

impl Default for RepaintConfig {
    fn default() -> Self {
        Self { jump_length: 10, num_resamples: 10, inference_steps: None }
    }
}

impl RepaintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.jump_length == 0 || self.num_resamples == 0 || self.inference_steps == Some(0) {
            return Err(DiffusionError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RepaintStats {
    pub denoise_steps: usize,
    pub renoise_steps: usize,
}

/// Sequence of noise levels visited, from `steps` down to 0. A decrease is
/// a denoising step, an increase a single forward re-noising step. After
/// each block of `jump_length` steps (except the last) the chain jumps back
/// `jump_length` levels, `num_resamples - 1` times.
pub fn jump_schedule(steps: usize, jump_length: usize, num_resamples: usize) -> Vec<usize> {
    // jump points in zero-based step indices
    let mut jumps = vec![0usize; steps];
    for p in (0..steps.saturating_sub(jump_length)).step_by(jump_length.max(1)) {
        jumps[p] = num_resamples.saturating_sub(1);
    }
    // visiting zero-based step k means the chain is at level k + 1
    let mut levels = Vec::new();
    let mut t = steps;
    while t >= 1 {
        t -= 1;
        levels.push(t + 1);
        if jumps[t] > 0 {
            jumps[t] -= 1;
            for _ in 0..jump_length {
                t += 1;
                levels.push(t + 1);
            }
        }
    }
    levels.push(0);
    levels
}

fn compose(known: &Tensor, unknown: &Tensor, mask: &Mask) -> Tensor {
    let data = known
        .data()
        .iter()
        .zip(unknown.data())
        .zip(mask.bits())
        .map(|((&k, &u), &masked)| if masked { u } else { k })
        .collect();
    Tensor::new(known.shape(), data).expect("same shapes")
}

pub fn repaint_inpaint(
    model: &dyn NoisePredictor,
    sched: &DiffusionSchedule,
    h: &Heightmap,
    m: &Mask,
    cfg: &RepaintConfig,
    rng: &mut SeededRng,
) -> Result<Heightmap> {
    repaint_inpaint_with_stats(model, sched, h, m, cfg, rng).map(|(out, _)| out)
}

pub fn repaint_inpaint_with_stats(
    model: &dyn NoisePredictor,
    sched: &DiffusionSchedule,
    h: &Heightmap,
    m: &Mask,
    cfg: &RepaintConfig,
    rng: &mut SeededRng,
) -> Result<(Heightmap, RepaintStats)> {
    cfg.validate()?;
    m.check_size(h.width(), h.height())?;
    if let Some(i) = h.values().iter().zip(m.bits()).position(|(v, &masked)| !masked && v.is_nan()) {
        return Err(DiffusionError::KnownNodata(i));
    }
    if m.masked_count() == 0 {
        return Ok((h.clone(), RepaintStats::default()));
    }
    let sched = match cfg.inference_steps {
        Some(s) => sched.respace(s)?,
        None => sched.clone(),
    };
    let all_masked = m.known_count() == 0;
    if all_masked {
        log::warn!("mask covers every pixel; falling back to unconditional sampling");
    }
    let shape = [1, 1, h.height(), h.width()];
    let x0 = to_model_space(h);
    let levels = jump_schedule(sched.len(), cfg.jump_length, cfg.num_resamples);
    let mut stats = RepaintStats::default();
    let mut x = randn(&shape, rng);
    for pair in levels.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b < a {
            let eps = model.predict(&x, &[sched.model_timestep(a)])?;
            let z = (a > 1).then(|| randn(&shape, rng));
            let unknown = reverse_step(&x, &eps, a, &sched, z.as_ref())?;
            x = if all_masked {
                unknown
            } else {
                let known = super::q_sample(&x0, b, &randn(&shape, rng), &sched)?;
                compose(&known, &unknown, m)
            };
            stats.denoise_steps += 1;
        } else {
            let beta = sched.beta(b);
            let (keep, noise) = ((1.0 - beta).sqrt(), beta.sqrt());
            let data = x
                .data()
                .iter()
                .map(|&v| (keep * v as f64 + noise * rng.sample::<f64, _>(rand_distr::StandardNormal)) as f32)
                .collect();
            x = Tensor::new(&shape, data)?;
            if !x.all_finite() {
                return Err(DiffusionError::NonFinite(b));
            }
            stats.renoise_steps += 1;
        }
    }
    let values = h
        .values()
        .iter()
        .zip(x.data())
        .zip(m.bits())
        .map(|((&orig, &v), &masked)| if masked { ((v + 1.0) * 0.5).clamp(0.0, 1.0) } else { orig })
        .collect();
    let out =
        Heightmap::new(h.width(), h.height(), values).map_err(|e| DiffusionError::ShapeMismatch(e.to_string()))?;
    Ok((out, stats))
}
