//! Void filling for planetary heightmaps.
//!
//! An unconditional DDPM denoiser is driven through the RePaint resampling
//! loop to reconstruct masked regions; IDW, ordinary kriging and
//! Navier-Stokes inpainting serve as classical baselines, scored with RMSE,
//! MAE, PSNR, EMD and SSIM by the evaluation harness.

pub mod classical;
pub mod config;
pub mod diffusion;
pub mod grid;
pub mod harness;
pub mod maskgen;
pub mod mesh;
pub mod metrics;
pub mod nn;
pub mod rng;
