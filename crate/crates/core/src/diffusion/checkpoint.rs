//! Checkpoint = UNP1 parameter file plus a `key = value` sidecar describing
//! the schedule and the network shape.

use std::path::{Path, PathBuf};

use super::{make_schedule, DiffusionSchedule, Result, TrainConfig, VarianceKind};
use crate::config::{join_list, KeyValues};
use crate::nn::{read_unp1, write_unp1, UNetConfig, UNetParams};

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: UNetParams,
    pub timesteps: usize,
    pub beta_1: f64,
    pub beta_t: f64,
    pub variance: VarianceKind,
    pub resolution: usize,
}

impl Checkpoint {
    pub fn new(params: UNetParams, cfg: &TrainConfig) -> Self {
        Self {
            params,
            timesteps: cfg.timesteps,
            beta_1: cfg.beta_1,
            beta_t: cfg.beta_t,
            variance: cfg.variance,
            resolution: cfg.resolution,
        }
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        Ok(make_schedule(self.timesteps, self.beta_1, self.beta_t)?.with_variance(self.variance))
    }
}

/// `model.unp1` -> `model.unp1.meta`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_unp1(&ckpt.params.store, path)?;
    let c = &ckpt.params.config;
    let mut kv = KeyValues::new();
    kv.set("timesteps", ckpt.timesteps);
    kv.set("beta_1", ckpt.beta_1);
    kv.set("beta_T", ckpt.beta_t);
    kv.set("variance", ckpt.variance);
    kv.set("resolution", ckpt.resolution);
    kv.set("in_channels", c.in_channels);
    kv.set("base_channels", c.base_channels);
    kv.set("channel_mults", join_list(&c.channel_mults));
    kv.set("num_res_blocks", c.num_res_blocks);
    kv.set("time_embed_dim", c.time_embed_dim);
    kv.set("attention_levels", join_list(&c.attention_levels));
    kv.set("groupnorm_groups", c.groupnorm_groups);
    kv.write(&sidecar_path(path))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let kv = KeyValues::read(&sidecar_path(path))?;
    let config = UNetConfig {
        in_channels: kv.require("in_channels")?,
        base_channels: kv.require("base_channels")?,
        channel_mults: kv.get_list("channel_mults")?.unwrap_or_default(),
        num_res_blocks: kv.require("num_res_blocks")?,
        time_embed_dim: kv.require("time_embed_dim")?,
        attention_levels: kv.get_list("attention_levels")?.unwrap_or_default(),
        groupnorm_groups: kv.require("groupnorm_groups")?,
    };
    let params = UNetParams::from_store(config, read_unp1(path)?)?;
    Ok(Checkpoint {
        params,
        timesteps: kv.require("timesteps")?,
        beta_1: kv.require("beta_1")?,
        beta_t: kv.require("beta_T")?,
        variance: kv.get("variance")?.unwrap_or_default(),
        resolution: kv.require("resolution")?,
    })
}
