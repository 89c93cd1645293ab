//! DDPM noise schedule, training, ancestral sampling and RePaint
//! inpainting.
//!
//! Heightmaps live in `[0, 1]`; the network sees them rescaled to `[-1, 1]`.

mod checkpoint;
mod repaint;
mod sample;
mod schedule;
mod train;

use thiserror::Error;

use crate::config::ConfigError;
use crate::grid::Heightmap;
use crate::maskgen::MaskError;
use crate::nn::{NnError, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, sidecar_path, Checkpoint};
pub use repaint::{jump_schedule, repaint_inpaint, repaint_inpaint_with_stats, RepaintConfig, RepaintStats};
pub use sample::{ddpm_sample, ddpm_sample_raw, reverse_step};
pub use schedule::{make_schedule, q_sample, DiffusionSchedule, VarianceKind};
pub use train::{train, write_loss_csv, EpochReport, StepLoss, TrainConfig, TrainOutput};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("bad schedule range: {0}")]
    BadRange(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {index} is {got}x{got_h}, expected {expected}x{expected}")]
    ResolutionMismatch { index: usize, expected: usize, got: usize, got_h: usize },
    #[error("non-finite state at timestep {0}")]
    NonFinite(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("known pixel contains nodata at index {0}")]
    KnownNodata(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DiffusionError>;

/// `[0, 1]` heightmap to a `(1, 1, h, w)` tensor in `[-1, 1]`. NaN maps to 0.
pub fn to_model_space(h: &Heightmap) -> Tensor {
    let data = h.values().iter().map(|&v| if v.is_nan() { 0.0 } else { 2.0 * v - 1.0 }).collect();
    Tensor::new(&[1, 1, h.height(), h.width()], data).expect("shape from heightmap")
}

/// Batch item `index` of a model-space tensor back to `[0, 1]`, clamped.
pub fn from_model_space(x: &Tensor, index: usize) -> Result<Heightmap> {
    let item = x.batch_item(index)?;
    let (_, _, h, w) = item.dims4()?;
    let data = item.data().iter().map(|&v| ((v + 1.0) * 0.5).clamp(0.0, 1.0)).collect();
    Heightmap::new(w, h, data).map_err(|e| DiffusionError::ShapeMismatch(e.to_string()))
}

pub(crate) fn randn(shape: &[usize], rng: &mut crate::rng::SeededRng) -> Tensor {
    use rand::Rng;
    Tensor::from_fn(shape, |_| rng.sample::<f32, _>(rand_distr::StandardNormal))
}
