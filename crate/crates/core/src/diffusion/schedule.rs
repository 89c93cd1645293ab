use super::{DiffusionError, Result};
use crate::nn::Tensor;

/// Posterior variance used by the reverse step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VarianceKind {
    /// `sigma_t^2 = beta_t`
    #[default]
    Beta,
    /// `sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t`
    BetaTilde,
}

impl std::str::FromStr for VarianceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "beta" => Ok(Self::Beta),
            "beta_tilde" => Ok(Self::BetaTilde),
            _ => Err(format!("unknown variance {s:?}")),
        }
    }
}

impl std::fmt::Display for VarianceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Beta => "beta",
            Self::BetaTilde => "beta_tilde",
        })
    }
}

/// Noise schedule indexed by timesteps `1..=T`.
///
/// A respaced schedule keeps the original training timestep of each of its
/// steps in `model_timestep`, which is what the network is conditioned on.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    model_t: Vec<usize>,
    pub variance: VarianceKind,
}

/// Linear betas from `beta_1` to `beta_T`.
pub fn make_schedule(steps: usize, beta_1: f64, beta_t: f64) -> Result<DiffusionSchedule> {
    if steps == 0 {
        return Err(DiffusionError::BadRange("T must be at least 1".into()));
    }
    let ordered = if steps == 1 { beta_1 <= beta_t } else { beta_1 < beta_t };
    if !(beta_1 > 0.0 && beta_t < 1.0 && ordered) {
        return Err(DiffusionError::BadRange(format!("need 0 < beta_1 < beta_T < 1, got {beta_1}, {beta_t}")));
    }
    let betas: Vec<f64> = (0..steps)
        .map(|i| if steps == 1 { beta_1 } else { beta_1 + (beta_t - beta_1) * i as f64 / (steps - 1) as f64 })
        .collect();
    Ok(DiffusionSchedule::from_betas(betas, (1..=steps).collect()))
}

impl DiffusionSchedule {
    fn from_betas(betas: Vec<f64>, model_t: Vec<usize>) -> Self {
        let mut prod = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                prod *= 1.0 - b;
                prod
            })
            .collect();
        Self { betas, alpha_bars, model_t, variance: VarianceKind::Beta }
    }

    pub fn with_variance(mut self, variance: VarianceKind) -> Self {
        self.variance = variance;
        self
    }

    /// Number of steps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    /// `abar_t`, with `abar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        match self.variance {
            VarianceKind::Beta => self.beta(t).sqrt(),
            VarianceKind::BetaTilde => {
                ((1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t)) * self.beta(t)).sqrt()
            }
        }
    }

    pub fn model_timestep(&self, t: usize) -> usize {
        self.model_t[t - 1]
    }

    /// Subsequence of `steps` timesteps `tau_i = round(i T / steps)` with
    /// `beta'_i = 1 - abar_{tau_i} / abar_{tau_{i-1}}`, so that `abar'_i =
    /// abar_{tau_i}`.
    pub fn respace(&self, steps: usize) -> Result<DiffusionSchedule> {
        let t = self.len();
        if steps == 0 || steps > t {
            return Err(DiffusionError::BadRange(format!("cannot respace {t} steps to {steps}")));
        }
        if steps == t {
            return Ok(self.clone());
        }
        let tau: Vec<usize> = (1..=steps).map(|i| ((i * t) as f64 / steps as f64).round() as usize).collect();
        let mut prev = 1.0;
        let betas = tau
            .iter()
            .map(|&ti| {
                let ab = self.alpha_bar(ti);
                let b = 1.0 - ab / prev;
                prev = ab;
                b
            })
            .collect();
        let model_t = tau.iter().map(|&ti| self.model_timestep(ti)).collect();
        Ok(Self::from_betas(betas, model_t).with_variance(self.variance))
    }
}

/// `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`; `t = 0` returns `x0`.
pub fn q_sample(x0: &Tensor, t: usize, eps: &Tensor, sched: &DiffusionSchedule) -> Result<Tensor> {
    if x0.shape() != eps.shape() {
        return Err(DiffusionError::ShapeMismatch(format!("x0 {:?} vs eps {:?}", x0.shape(), eps.shape())));
    }
    if t > sched.len() {
        return Err(DiffusionError::BadRange(format!("timestep {t} beyond T = {}", sched.len())));
    }
    if t == 0 {
        return Ok(x0.clone());
    }
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x0.data().iter().zip(eps.data()).map(|(&x, &e)| (a * x as f64 + b * e as f64) as f32).collect();
    Ok(Tensor::new(x0.shape(), data)?)
}
