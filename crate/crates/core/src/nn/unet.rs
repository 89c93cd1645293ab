//! U-Net noise predictor `eps_theta(x_t, t)`.
//!
//! Encoder levels of residual blocks with average-pool downsampling, a
//! middle block, and a mirrored decoder with nearest upsampling and skip
//! concatenation. The timestep enters every residual block through a
//! sinusoidal embedding and a small MLP.

use rand::Rng;

use super::{Graph, NnError, ParamStore, Result, Tensor, Var};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub channel_mults: Vec<usize>,
    pub num_res_blocks: usize,
    pub time_embed_dim: usize,
    /// Encoder levels (0-based) followed by self-attention. A non-empty set
    /// also adds attention to the middle block.
    pub attention_levels: Vec<usize>,
    pub groupnorm_groups: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            base_channels: 32,
            channel_mults: vec![1, 2, 2],
            num_res_blocks: 1,
            time_embed_dim: 128,
            attention_levels: Vec::new(),
            groupnorm_groups: 8,
        }
    }
}

impl UNetConfig {
    /// Reduced width used for single-core training runs at 32x32.
    pub fn desk() -> Self {
        Self { base_channels: 16, time_embed_dim: 64, ..Self::default() }
    }

    /// Tiny network for gradient checks at 8x8.
    pub fn toy() -> Self {
        Self { base_channels: 4, channel_mults: vec![1, 2], time_embed_dim: 8, groupnorm_groups: 2, ..Self::default() }
    }

    pub fn levels(&self) -> usize {
        self.channel_mults.len()
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels * self.channel_mults[level]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.in_channels == 0 || self.base_channels == 0 || self.num_res_blocks == 0 {
            return bad("channel and block counts must be positive".into());
        }
        if self.channel_mults.is_empty() || self.channel_mults.contains(&0) {
            return bad(format!("channel multipliers {:?}", self.channel_mults));
        }
        if self.time_embed_dim == 0 || !self.time_embed_dim.is_multiple_of(2) {
            return bad(format!("time embedding dim {} must be even", self.time_embed_dim));
        }
        let g = self.groupnorm_groups;
        if g == 0 || (0..self.levels()).any(|l| !self.channels(l).is_multiple_of(g)) {
            return bad(format!("{g} groups do not divide every level width"));
        }
        if let Some(l) = self.attention_levels.iter().find(|&&l| l >= self.levels()) {
            return bad(format!("attention level {l} out of range"));
        }
        Ok(())
    }

    /// Spatial sizes must halve cleanly at every downsampling.
    pub fn check_size(&self, side: usize) -> Result<()> {
        let f = 1usize << (self.levels() - 1);
        if side == 0 || !side.is_multiple_of(f) {
            return Err(NnError::ShapeMismatch(format!("size {side} not divisible by {f}")));
        }
        Ok(())
    }
}

/// `concat(sin(t w_k), cos(t w_k))` with `w_k = 10000^(-2k/dim)`.
pub fn time_embedding(t: f32, dim: usize) -> Vec<f32> {
    let half = dim / 2;
    let mut out = vec![0.0; 2 * half];
    for k in 0..half {
        let w = 10000f64.powf(-2.0 * k as f64 / dim as f64);
        let a = t as f64 * w;
        out[k] = a.sin() as f32;
        out[half + k] = a.cos() as f32;
    }
    out
}

/// Anything that predicts the noise in `x_t` for a batch of timesteps.
pub trait NoisePredictor: Sync {
    fn predict(&self, x: &Tensor, t: &[usize]) -> Result<Tensor>;
}

#[derive(Clone, Copy)]
enum Init {
    Kaiming(usize),
    Zeros,
    Ones,
}

struct Layout {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl Layout {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) {
        self.specs.push((name, shape, init));
    }

    fn conv(&mut self, p: &str, ci: usize, co: usize, k: usize, zero: bool) {
        let init = if zero { Init::Zeros } else { Init::Kaiming(ci * k * k) };
        self.add(format!("{p}.weight"), vec![co, ci, k, k], init);
        self.add(format!("{p}.bias"), vec![co], Init::Zeros);
    }

    fn linear(&mut self, p: &str, i: usize, o: usize) {
        self.add(format!("{p}.weight"), vec![o, i], Init::Kaiming(i));
        self.add(format!("{p}.bias"), vec![o], Init::Zeros);
    }

    fn norm(&mut self, p: &str, c: usize) {
        self.add(format!("{p}.gamma"), vec![c], Init::Ones);
        self.add(format!("{p}.beta"), vec![c], Init::Zeros);
    }

    fn res(&mut self, p: &str, ci: usize, co: usize, temb: usize) {
        self.norm(&format!("{p}.norm1"), ci);
        self.conv(&format!("{p}.conv1"), ci, co, 3, false);
        self.linear(&format!("{p}.temb"), temb, co);
        self.norm(&format!("{p}.norm2"), co);
        self.conv(&format!("{p}.conv2"), co, co, 3, false);
        if ci != co {
            self.conv(&format!("{p}.skip"), ci, co, 1, false);
        }
    }

    fn attn(&mut self, p: &str, c: usize) {
        self.norm(&format!("{p}.norm"), c);
        self.conv(&format!("{p}.qkv"), c, 3 * c, 1, false);
        self.conv(&format!("{p}.proj"), c, c, 1, true);
    }

    fn of(cfg: &UNetConfig) -> Self {
        let mut l = Layout { specs: Vec::new() };
        let e = cfg.time_embed_dim;
        l.linear("time.fc1", e, e);
        l.linear("time.fc2", e, e);
        l.conv("conv_in", cfg.in_channels, cfg.base_channels, 3, false);
        let mut ch = cfg.base_channels;
        let mut skips = vec![];
        for lv in 0..cfg.levels() {
            let co = cfg.channels(lv);
            for r in 0..cfg.num_res_blocks {
                l.res(&format!("down.{lv}.res.{r}"), ch, co, e);
                ch = co;
                if cfg.attention_levels.contains(&lv) {
                    l.attn(&format!("down.{lv}.attn.{r}"), ch);
                }
                skips.push(ch);
            }
        }
        l.res("mid.res", ch, ch, e);
        if !cfg.attention_levels.is_empty() {
            l.attn("mid.attn", ch);
        }
        for lv in (0..cfg.levels()).rev() {
            let co = cfg.channels(lv);
            for r in 0..cfg.num_res_blocks {
                let s = skips.pop().expect("one skip per block");
                l.res(&format!("up.{lv}.res.{r}"), ch + s, co, e);
                ch = co;
            }
            if lv > 0 {
                l.conv(&format!("up.{lv}.upsample"), ch, ch, 3, false);
            }
        }
        l.norm("out.norm", ch);
        l.conv("out.conv", ch, cfg.in_channels, 3, true);
        l
    }
}

/// Configuration plus a parameter store whose names and shapes follow it.
#[derive(Clone, Debug)]
pub struct UNetParams {
    pub config: UNetConfig,
    pub store: ParamStore,
}

impl UNetParams {
    /// Kaiming-uniform weights, zero biases, and a zero output convolution
    /// so the untrained network predicts zero noise.
    pub fn init(config: UNetConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        for (name, shape, init) in Layout::of(&config).specs {
            let t = match init {
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::full(&shape, 1.0),
                Init::Kaiming(fan_in) => {
                    let bound = (6.0 / fan_in as f32).sqrt();
                    Tensor::from_fn(&shape, |_| rng.random_range(-bound..bound))
                }
            };
            store.insert(name, t);
        }
        Ok(Self { config, store })
    }

    /// Adopt a loaded store after checking it matches the configuration.
    pub fn from_store(config: UNetConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let specs = Layout::of(&config).specs;
        if specs.len() != store.len() {
            return Err(NnError::ShapeMismatch(format!(
                "store has {} tensors, configuration needs {}",
                store.len(),
                specs.len()
            )));
        }
        for (name, shape, _) in &specs {
            let t = store.get(name).ok_or_else(|| NnError::UnknownParam(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(NnError::ShapeMismatch(format!("{name}: {:?} vs {:?}", t.shape(), shape)));
            }
        }
        Ok(Self { config, store })
    }

    pub fn param_count(&self) -> usize {
        self.store.values().map(Tensor::numel).sum()
    }

    /// Parameter count implied by a configuration, without allocating.
    pub fn count_for(config: &UNetConfig) -> usize {
        Layout::of(config).specs.iter().map(|(_, s, _)| s.iter().product::<usize>()).sum()
    }

    fn p(&self, g: &mut Graph, name: &str) -> Result<Var> {
        let t = self.store.get(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        g.param(name, t)
    }

    fn conv(&self, g: &mut Graph, x: Var, p: &str) -> Result<Var> {
        let w = self.p(g, &format!("{p}.weight"))?;
        let b = self.p(g, &format!("{p}.bias"))?;
        g.conv2d(x, w, Some(b))
    }

    fn linear(&self, g: &mut Graph, x: Var, p: &str) -> Result<Var> {
        let w = self.p(g, &format!("{p}.weight"))?;
        let b = self.p(g, &format!("{p}.bias"))?;
        g.linear(x, w, Some(b))
    }

    fn norm_act(&self, g: &mut Graph, x: Var, p: &str) -> Result<Var> {
        let gamma = self.p(g, &format!("{p}.gamma"))?;
        let beta = self.p(g, &format!("{p}.beta"))?;
        let n = g.group_norm(x, gamma, beta, self.config.groupnorm_groups)?;
        g.silu(n)
    }

    fn res(&self, g: &mut Graph, x: Var, temb: Var, p: &str) -> Result<Var> {
        let h = self.norm_act(g, x, &format!("{p}.norm1"))?;
        let h = self.conv(g, h, &format!("{p}.conv1"))?;
        let e = self.linear(g, temb, &format!("{p}.temb"))?;
        let h = g.add_channel(h, e)?;
        let h = self.norm_act(g, h, &format!("{p}.norm2"))?;
        let h = self.conv(g, h, &format!("{p}.conv2"))?;
        let skip = if self.store.contains_key(&format!("{p}.skip.weight")) {
            self.conv(g, x, &format!("{p}.skip"))?
        } else {
            x
        };
        g.add(h, skip)
    }

    fn attn(&self, g: &mut Graph, x: Var, p: &str) -> Result<Var> {
        let gamma = self.p(g, &format!("{p}.norm.gamma"))?;
        let beta = self.p(g, &format!("{p}.norm.beta"))?;
        let h = g.group_norm(x, gamma, beta, self.config.groupnorm_groups)?;
        let qkv = self.conv(g, h, &format!("{p}.qkv"))?;
        let a = g.attention(qkv)?;
        let o = self.conv(g, a, &format!("{p}.proj"))?;
        g.add(x, o)
    }

    /// Record the forward pass for input `x` (b, c, s, s) and one timestep
    /// per batch item.
    pub fn forward_graph(&self, g: &mut Graph, x: Var, t: &[usize]) -> Result<Var> {
        let cfg = &self.config;
        let (b, c, h, w) = g.value(x).dims4()?;
        if c != cfg.in_channels || h != w || t.len() != b {
            return Err(NnError::ShapeMismatch(format!("input {:?} with {} timesteps", g.value(x).shape(), t.len())));
        }
        cfg.check_size(h)?;
        let e = cfg.time_embed_dim;
        let emb: Vec<f32> = t.iter().flat_map(|&ti| time_embedding(ti as f32, e)).collect();
        let emb = g.input(Tensor::new(&[b, e], emb)?)?;
        let temb = self.linear(g, emb, "time.fc1")?;
        let temb = g.silu(temb)?;
        let temb = self.linear(g, temb, "time.fc2")?;
        let temb = g.silu(temb)?;

        let mut hcur = self.conv(g, x, "conv_in")?;
        let mut skips = Vec::new();
        for lv in 0..cfg.levels() {
            for r in 0..cfg.num_res_blocks {
                hcur = self.res(g, hcur, temb, &format!("down.{lv}.res.{r}"))?;
                if cfg.attention_levels.contains(&lv) {
                    hcur = self.attn(g, hcur, &format!("down.{lv}.attn.{r}"))?;
                }
                skips.push(hcur);
            }
            if lv + 1 < cfg.levels() {
                hcur = g.avg_pool2(hcur)?;
            }
        }
        hcur = self.res(g, hcur, temb, "mid.res")?;
        if !cfg.attention_levels.is_empty() {
            hcur = self.attn(g, hcur, "mid.attn")?;
        }
        for lv in (0..cfg.levels()).rev() {
            for r in 0..cfg.num_res_blocks {
                let s = skips.pop().expect("one skip per block");
                let cat = g.concat(hcur, s)?;
                hcur = self.res(g, cat, temb, &format!("up.{lv}.res.{r}"))?;
            }
            if lv > 0 {
                let u = g.upsample2(hcur)?;
                hcur = self.conv(g, u, &format!("up.{lv}.upsample"))?;
            }
        }
        let hcur = self.norm_act(g, hcur, "out.norm")?;
        self.conv(g, hcur, "out.conv")
    }

    pub fn forward(&self, x: &Tensor, t: &[usize]) -> Result<Tensor> {
        let mut g = Graph::no_grad();
        let xv = g.input(x.clone())?;
        let out = self.forward_graph(&mut g, xv, t)?;
        Ok(g.value(out).clone())
    }
}

impl NoisePredictor for UNetParams {
    fn predict(&self, x: &Tensor, t: &[usize]) -> Result<Tensor> {
        self.forward(x, t)
    }
}
