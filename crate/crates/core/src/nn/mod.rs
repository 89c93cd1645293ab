//! Small CPU neural-network toolkit: tensors, tape autodiff, the U-Net noise
//! predictor and Adam.

mod adam;
mod graph;
pub mod kernels;
mod params;
mod tensor;
mod unet;

use thiserror::Error;

pub use adam::{clip_grad_norm, Adam, AdamConfig, Ema};
pub use graph::{Gradients, Graph, Var};
pub use params::{decode_unp1, encode_unp1, read_unp1, write_unp1, ParamStore};
pub use tensor::Tensor;
pub use unet::{time_embedding, NoisePredictor, UNetConfig, UNetParams};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("graph already differentiated")]
    GraphConsumed,
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed parameter file at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
