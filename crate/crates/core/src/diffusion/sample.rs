use super::{from_model_space, randn, DiffusionError, DiffusionSchedule, Result};
use crate::grid::Heightmap;
use crate::nn::{NoisePredictor, Tensor};
use crate::rng::SeededRng;

/// One ancestral step `x_t -> x_{t-1}`:
/// `(x_t - beta_t / sqrt(1 - abar_t) eps) / sqrt(alpha_t) + sigma_t z`,
/// with the noise term dropped at `t = 1`.
pub fn reverse_step(
    x_t: &Tensor,
    eps: &Tensor,
    t: usize,
    sched: &DiffusionSchedule,
    z: Option<&Tensor>,
) -> Result<Tensor> {
    if x_t.shape() != eps.shape() || z.is_some_and(|z| z.shape() != x_t.shape()) {
        return Err(DiffusionError::ShapeMismatch(format!("reverse step on {:?}", x_t.shape())));
    }
    let coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    let inv = 1.0 / sched.alpha(t).sqrt();
    let sigma = if t > 1 { sched.sigma(t) } else { 0.0 };
    let mut out: Vec<f32> =
        x_t.data().iter().zip(eps.data()).map(|(&x, &e)| (inv * (x as f64 - coef * e as f64)) as f32).collect();
    if let (Some(z), true) = (z, sigma > 0.0) {
        out.iter_mut().zip(z.data()).for_each(|(o, &zv)| *o += (sigma * zv as f64) as f32);
    }
    let out = Tensor::new(x_t.shape(), out)?;
    if !out.all_finite() {
        return Err(DiffusionError::NonFinite(t));
    }
    Ok(out)
}

/// Ancestral sampling from pure noise, returned in model space `[-1, 1]`
/// without clamping. `shape` is `(n, channels, h, w)`.
pub fn ddpm_sample_raw(
    model: &dyn NoisePredictor,
    sched: &DiffusionSchedule,
    rng: &mut SeededRng,
    shape: [usize; 4],
) -> Result<Tensor> {
    let mut x = randn(&shape, rng);
    for t in (1..=sched.len()).rev() {
        let ts = vec![sched.model_timestep(t); shape[0]];
        let eps = model.predict(&x, &ts)?;
        let z = (t > 1).then(|| randn(&shape, rng));
        x = reverse_step(&x, &eps, t, sched, z.as_ref())?;
    }
    Ok(x)
}

/// `n` unconditional `side x side` heightmaps in `[0, 1]`.
pub fn ddpm_sample(
    model: &dyn NoisePredictor,
    sched: &DiffusionSchedule,
    rng: &mut SeededRng,
    n: usize,
    side: usize,
) -> Result<Vec<Heightmap>> {
    let x = ddpm_sample_raw(model, sched, rng, [n, 1, side, side])?;
    (0..n).map(|i| from_model_space(&x, i)).collect()
}
