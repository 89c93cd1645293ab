//! Tape-based reverse-mode automatic differentiation.
//!
//! Every op appends a node holding its output; `backward` walks the tape in
//! reverse once and returns gradients keyed by parameter name.

use std::collections::BTreeMap;

use super::kernels::{self, gemm, ConvShape};
use super::{NnError, Result, Tensor};

pub type Gradients = BTreeMap<String, Tensor>;

const GN_EPS: f32 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(String),
    Conv2d { x: Var, w: Var, b: Option<Var> },
    Linear { x: Var, w: Var, b: Option<Var> },
    GroupNorm { x: Var, gamma: Var, beta: Var, groups: usize, mean: Vec<f32>, rstd: Vec<f32> },
    Silu(Var),
    Add(Var, Var),
    AddChannel { x: Var, bias: Var },
    Concat(Var, Var),
    AvgPool2(Var),
    Upsample2(Var),
    Scale(Var, f32),
    Mse(Var, Var),
    SumSquares(Var),
    Attention { qkv: Var, probs: Vec<f32> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Conv2d { .. } => "conv2d",
            Op::Linear { .. } => "linear",
            Op::GroupNorm { .. } => "group_norm",
            Op::Silu(_) => "silu",
            Op::Add(..) => "add",
            Op::AddChannel { .. } => "add_channel",
            Op::Concat(..) => "concat",
            Op::AvgPool2(_) => "avg_pool2",
            Op::Upsample2(_) => "upsample2",
            Op::Scale(..) => "scale",
            Op::Mse(..) => "mse",
            Op::SumSquares(_) => "sum_squares",
            Op::Attention { .. } => "attention",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
    track_params: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(msg: String) -> NnError {
    NnError::ShapeMismatch(msg)
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), consumed: false, track_params: true }
    }

    /// A graph for inference: parameters are recorded as constants and
    /// `backward` has nothing to differentiate.
    pub fn no_grad() -> Self {
        Self { nodes: Vec::new(), consumed: false, track_params: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(NnError::NonFinite(op.name().to_string()));
        }
        let needs_grad = match op {
            Op::Input => false,
            Op::Param(_) => self.track_params,
            _ => parents.iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Input, &[])
    }

    pub fn param(&mut self, name: &str, t: &Tensor) -> Result<Var> {
        self.push(t.clone(), Op::Param(name.to_string()), &[])
    }

    /// Same-padded, stride-1 2-D cross-correlation.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (batch, c_in, h, wd) = self.value(x).dims4()?;
        let (c_out, wc, k, k2) = self.value(w).dims4()?;
        if wc != c_in || k != k2 || k % 2 == 0 {
            return Err(mismatch(format!(
                "conv2d input {:?} with kernel {:?}",
                self.value(x).shape(),
                self.value(w).shape()
            )));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [c_out] {
                return Err(mismatch(format!("conv2d bias {:?} for {c_out} channels", self.value(b).shape())));
            }
        }
        let s = ConvShape { batch, c_in, c_out, h, w: wd, k };
        let out =
            kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), b.map(|b| self.value(b).data()), &s);
        let t = Tensor::new(&[batch, c_out, h, wd], out)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(t, Op::Conv2d { x, w, b }, &parents)
    }

    /// `x (n, in) -> x w^T + b`, `w (out, in)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, d_in) = match self.value(x).shape() {
            [n, d] => (*n, *d),
            s => return Err(mismatch(format!("linear input {s:?}"))),
        };
        let d_out = match self.value(w).shape() {
            [o, i] if *i == d_in => *o,
            s => return Err(mismatch(format!("linear weight {s:?} for input width {d_in}"))),
        };
        let mut y = vec![0.0; n * d_out];
        if let Some(b) = b {
            let bias = self.value(b);
            if bias.shape() != [d_out] {
                return Err(mismatch(format!("linear bias {:?}", bias.shape())));
            }
            for row in y.chunks_exact_mut(d_out) {
                row.copy_from_slice(bias.data());
            }
        }
        gemm(n, d_in, d_out, self.value(x).data(), (d_in, 1), self.value(w).data(), (1, d_in), 1.0, &mut y);
        let t = Tensor::new(&[n, d_out], y)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(t, Op::Linear { x, w, b }, &parents)
    }

    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        if groups == 0 || c % groups != 0 {
            return Err(mismatch(format!("{groups} groups for {c} channels")));
        }
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(mismatch("group_norm affine parameters".into()));
        }
        let xs = self.value(x).data();
        let (gs, bs) = (self.value(gamma).data(), self.value(beta).data());
        let cpg = c / groups;
        let span = cpg * h * w;
        let hw = h * w;
        let mut mean = vec![0.0; b * groups];
        let mut rstd = vec![0.0; b * groups];
        let mut y = vec![0.0; xs.len()];
        for bi in 0..b {
            for g in 0..groups {
                let off = (bi * c + g * cpg) * hw;
                let chunk = &xs[off..off + span];
                let m = chunk.iter().map(|&v| v as f64).sum::<f64>() / span as f64;
                let var = chunk.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / span as f64;
                let r = 1.0 / (var + GN_EPS as f64).sqrt();
                mean[bi * groups + g] = m as f32;
                rstd[bi * groups + g] = r as f32;
                for cc in 0..cpg {
                    let ch = g * cpg + cc;
                    let (ga, be) = (gs[ch], bs[ch]);
                    let o = off + cc * hw;
                    for i in o..o + hw {
                        y[i] = ((xs[i] as f64 - m) * r) as f32 * ga + be;
                    }
                }
            }
        }
        let t = Tensor::new(&[b, c, h, w], y)?;
        self.push(t, Op::GroupNorm { x, gamma, beta, groups, mean, rstd }, &[x, gamma, beta])
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&a| a * sigmoid(a)).collect())?;
        self.push(t, Op::Silu(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(format!("add {:?} + {:?}", va.shape(), vb.shape())));
        }
        let t = Tensor::new(va.shape(), va.data().iter().zip(vb.data()).map(|(p, q)| p + q).collect())?;
        self.push(t, Op::Add(a, b), &[a, b])
    }

    /// Broadcast-add a `(b, c)` tensor over the spatial axes of `(b, c, h, w)`.
    pub fn add_channel(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        if self.value(bias).shape() != [b, c] {
            return Err(mismatch(format!("add_channel bias {:?} for {b}x{c}", self.value(bias).shape())));
        }
        let hw = h * w;
        let bv = self.value(bias).data();
        let mut y = self.value(x).data().to_vec();
        for (i, chunk) in y.chunks_exact_mut(hw).enumerate() {
            let add = bv[i];
            chunk.iter_mut().for_each(|v| *v += add);
        }
        let t = Tensor::new(&[b, c, h, w], y)?;
        self.push(t, Op::AddChannel { x, bias }, &[x, bias])
    }

    /// Channel-axis concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ba, ca, h, w) = self.value(a).dims4()?;
        let (bb, cb, hb, wb) = self.value(b).dims4()?;
        if (ba, h, w) != (bb, hb, wb) {
            return Err(mismatch("concat spatial/batch mismatch".into()));
        }
        let hw = h * w;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut y = Vec::with_capacity((ca + cb) * hw * ba);
        for i in 0..ba {
            y.extend_from_slice(&da[i * ca * hw..(i + 1) * ca * hw]);
            y.extend_from_slice(&db[i * cb * hw..(i + 1) * cb * hw]);
        }
        let t = Tensor::new(&[ba, ca + cb, h, w], y)?;
        self.push(t, Op::Concat(a, b), &[a, b])
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(mismatch(format!("avg_pool2 on odd size {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let xs = self.value(x).data();
        let mut y = vec![0.0; b * c * oh * ow];
        for p in 0..b * c {
            let src = &xs[p * h * w..(p + 1) * h * w];
            let dst = &mut y[p * oh * ow..(p + 1) * oh * ow];
            for i in 0..oh {
                for j in 0..ow {
                    let s = src[2 * i * w + 2 * j]
                        + src[2 * i * w + 2 * j + 1]
                        + src[(2 * i + 1) * w + 2 * j]
                        + src[(2 * i + 1) * w + 2 * j + 1];
                    dst[i * ow + j] = 0.25 * s;
                }
            }
        }
        let t = Tensor::new(&[b, c, oh, ow], y)?;
        self.push(t, Op::AvgPool2(x), &[x])
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        let (oh, ow) = (2 * h, 2 * w);
        let xs = self.value(x).data();
        let mut y = vec![0.0; b * c * oh * ow];
        for p in 0..b * c {
            let src = &xs[p * h * w..(p + 1) * h * w];
            let dst = &mut y[p * oh * ow..(p + 1) * oh * ow];
            for i in 0..oh {
                for j in 0..ow {
                    dst[i * ow + j] = src[(i / 2) * w + j / 2];
                }
            }
        }
        let t = Tensor::new(&[b, c, oh, ow], y)?;
        self.push(t, Op::Upsample2(x), &[x])
    }

    pub fn scale(&mut self, x: Var, k: f32) -> Result<Var> {
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|a| a * k).collect())?;
        self.push(t, Op::Scale(x, k), &[x])
    }

    /// Mean squared difference, a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(format!("mse {:?} vs {:?}", va.shape(), vb.shape())));
        }
        let n = va.numel() as f64;
        let s: f64 = va.data().iter().zip(vb.data()).map(|(p, q)| ((p - q) as f64).powi(2)).sum();
        self.push(Tensor::scalar((s / n) as f32), Op::Mse(a, b), &[a, b])
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum_squares();
        self.push(Tensor::scalar(s as f32), Op::SumSquares(x), &[x])
    }

    /// Single-head spatial self-attention. `qkv` is `(b, 3c, h, w)` holding
    /// queries, keys and values stacked on the channel axis; the result is
    /// `(b, c, h, w)`.
    pub fn attention(&mut self, qkv: Var) -> Result<Var> {
        let (b, c3, h, w) = self.value(qkv).dims4()?;
        if c3 % 3 != 0 {
            return Err(mismatch(format!("attention needs 3c channels, got {c3}")));
        }
        let c = c3 / 3;
        let n = h * w;
        let scale = 1.0 / (c as f32).sqrt();
        let xs = self.value(qkv).data();
        let mut probs = vec![0.0; b * n * n];
        let mut out = vec![0.0; b * c * n];
        for bi in 0..b {
            let base = bi * c3 * n;
            let q = &xs[base..base + c * n];
            let k = &xs[base + c * n..base + 2 * c * n];
            let v = &xs[base + 2 * c * n..base + 3 * c * n];
            let p = &mut probs[bi * n * n..(bi + 1) * n * n];
            // S = Q^T K
            gemm(n, c, n, q, (1, n), k, (n, 1), 0.0, p);
            for row in p.chunks_exact_mut(n) {
                let mx = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v * scale));
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v * scale - mx).exp();
                    sum += *v;
                }
                row.iter_mut().for_each(|v| *v /= sum);
            }
            // O = V P^T
            gemm(c, n, n, v, (n, 1), p, (1, n), 0.0, &mut out[bi * c * n..(bi + 1) * c * n]);
        }
        let t = Tensor::new(&[b, c, h, w], out)?;
        self.push(t, Op::Attention { qkv, probs }, &[qkv])
    }

    /// Differentiate the scalar `loss`. A graph can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(NnError::GraphConsumed);
        }
        self.consumed = true;
        if self.value(loss).numel() != 1 {
            return Err(mismatch(format!("loss must be scalar, got {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::new();

        fn acc(grads: &mut [Option<Vec<f32>>], nodes: &[Node], v: Var, g: Vec<f32>) {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, x)| *e += x),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let nodes = &self.nodes;
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Input => {}
                Op::Param(name) => {
                    let t = Tensor::new(node.value.shape(), g)?;
                    match out.get_mut(name) {
                        Some(e) => e.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b),
                        None => {
                            out.insert(name.clone(), t);
                        }
                    }
                }
                Op::Conv2d { x, w, b } => {
                    let (batch, c_in, h, wd) = val(*x).dims4()?;
                    let (c_out, _, k, _) = val(*w).dims4()?;
                    let s = ConvShape { batch, c_in, c_out, h, w: wd, k };
                    let (dx, dw, db) = kernels::conv2d_backward(val(*x).data(), val(*w).data(), &g, &s);
                    acc(&mut grads, nodes, *x, dx);
                    acc(&mut grads, nodes, *w, dw);
                    if let Some(b) = b {
                        acc(&mut grads, nodes, *b, db);
                    }
                }
                Op::Linear { x, w, b } => {
                    let (n, d_in) = (val(*x).shape()[0], val(*x).shape()[1]);
                    let d_out = val(*w).shape()[0];
                    let mut dx = vec![0.0; n * d_in];
                    gemm(n, d_out, d_in, &g, (d_out, 1), val(*w).data(), (d_in, 1), 0.0, &mut dx);
                    let mut dw = vec![0.0; d_out * d_in];
                    gemm(d_out, n, d_in, &g, (1, d_out), val(*x).data(), (d_in, 1), 0.0, &mut dw);
                    acc(&mut grads, nodes, *x, dx);
                    acc(&mut grads, nodes, *w, dw);
                    if let Some(b) = b {
                        let mut db = vec![0.0; d_out];
                        for row in g.chunks_exact(d_out) {
                            db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                        }
                        acc(&mut grads, nodes, *b, db);
                    }
                }
                Op::GroupNorm { x, gamma, beta, groups, mean, rstd } => {
                    let (b, c, h, w) = val(*x).dims4()?;
                    let xs = val(*x).data();
                    let gs = val(*gamma).data();
                    let cpg = c / groups;
                    let hw = h * w;
                    let span = (cpg * hw) as f64;
                    let mut dx = vec![0.0; xs.len()];
                    let mut dgamma = vec![0.0f64; c];
                    let mut dbeta = vec![0.0f64; c];
                    for bi in 0..b {
                        for gi in 0..*groups {
                            let m = mean[bi * groups + gi] as f64;
                            let r = rstd[bi * groups + gi] as f64;
                            let off = (bi * c + gi * cpg) * hw;
                            let (mut s1, mut s2) = (0.0f64, 0.0f64);
                            for cc in 0..cpg {
                                let ch = gi * cpg + cc;
                                for j in off + cc * hw..off + (cc + 1) * hw {
                                    let xhat = (xs[j] as f64 - m) * r;
                                    let dxhat = g[j] as f64 * gs[ch] as f64;
                                    s1 += dxhat;
                                    s2 += dxhat * xhat;
                                    dgamma[ch] += g[j] as f64 * xhat;
                                    dbeta[ch] += g[j] as f64;
                                }
                            }
                            for cc in 0..cpg {
                                let ch = gi * cpg + cc;
                                for j in off + cc * hw..off + (cc + 1) * hw {
                                    let xhat = (xs[j] as f64 - m) * r;
                                    let dxhat = g[j] as f64 * gs[ch] as f64;
                                    dx[j] = (r / span * (span * dxhat - s1 - xhat * s2)) as f32;
                                }
                            }
                        }
                    }
                    acc(&mut grads, nodes, *x, dx);
                    acc(&mut grads, nodes, *gamma, dgamma.into_iter().map(|v| v as f32).collect());
                    acc(&mut grads, nodes, *beta, dbeta.into_iter().map(|v| v as f32).collect());
                }
                Op::Silu(x) => {
                    let dx = val(*x)
                        .data()
                        .iter()
                        .zip(&g)
                        .map(|(&a, &d)| {
                            let s = sigmoid(a);
                            d * s * (1.0 + a * (1.0 - s))
                        })
                        .collect();
                    acc(&mut grads, nodes, *x, dx);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, nodes, *a, g.clone());
                    acc(&mut grads, nodes, *b, g);
                }
                Op::AddChannel { x, bias } => {
                    let (_, _, h, w) = val(*x).dims4()?;
                    let db = g.chunks_exact(h * w).map(|c| c.iter().sum()).collect();
                    acc(&mut grads, nodes, *bias, db);
                    acc(&mut grads, nodes, *x, g);
                }
                Op::Concat(a, b) => {
                    let (ba, ca, h, w) = val(*a).dims4()?;
                    let cb = val(*b).dims4()?.1;
                    let hw = h * w;
                    let mut da = Vec::with_capacity(ba * ca * hw);
                    let mut db = Vec::with_capacity(ba * cb * hw);
                    for i in 0..ba {
                        let base = i * (ca + cb) * hw;
                        da.extend_from_slice(&g[base..base + ca * hw]);
                        db.extend_from_slice(&g[base + ca * hw..base + (ca + cb) * hw]);
                    }
                    acc(&mut grads, nodes, *a, da);
                    acc(&mut grads, nodes, *b, db);
                }
                Op::AvgPool2(x) => {
                    let (b, c, h, w) = val(*x).dims4()?;
                    let (oh, ow) = (h / 2, w / 2);
                    let mut dx = vec![0.0; b * c * h * w];
                    for p in 0..b * c {
                        for i in 0..h {
                            for j in 0..w {
                                dx[p * h * w + i * w + j] = 0.25 * g[p * oh * ow + (i / 2) * ow + j / 2];
                            }
                        }
                    }
                    acc(&mut grads, nodes, *x, dx);
                }
                Op::Upsample2(x) => {
                    let (b, c, h, w) = val(*x).dims4()?;
                    let (oh, ow) = (2 * h, 2 * w);
                    let mut dx = vec![0.0; b * c * h * w];
                    for p in 0..b * c {
                        for i in 0..oh {
                            for j in 0..ow {
                                dx[p * h * w + (i / 2) * w + j / 2] += g[p * oh * ow + i * ow + j];
                            }
                        }
                    }
                    acc(&mut grads, nodes, *x, dx);
                }
                Op::Scale(x, k) => {
                    let dx = g.iter().map(|d| d * k).collect();
                    acc(&mut grads, nodes, *x, dx);
                }
                Op::Mse(a, b) => {
                    let (va, vb) = (val(*a).data(), val(*b).data());
                    let f = 2.0 * g[0] / va.len() as f32;
                    let da: Vec<f32> = va.iter().zip(vb).map(|(p, q)| f * (p - q)).collect();
                    let db = da.iter().map(|v| -v).collect();
                    acc(&mut grads, nodes, *a, da);
                    acc(&mut grads, nodes, *b, db);
                }
                Op::SumSquares(x) => {
                    let dx = val(*x).data().iter().map(|v| 2.0 * v * g[0]).collect();
                    acc(&mut grads, nodes, *x, dx);
                }
                Op::Attention { qkv, probs } => {
                    let (b, c3, h, w) = val(*qkv).dims4()?;
                    let c = c3 / 3;
                    let n = h * w;
                    let scale = 1.0 / (c as f32).sqrt();
                    let xs = val(*qkv).data();
                    let mut dqkv = vec![0.0; xs.len()];
                    let mut dp = vec![0.0; n * n];
                    for bi in 0..b {
                        let base = bi * c3 * n;
                        let q = &xs[base..base + c * n];
                        let k = &xs[base + c * n..base + 2 * c * n];
                        let v = &xs[base + 2 * c * n..base + 3 * c * n];
                        let p = &probs[bi * n * n..(bi + 1) * n * n];
                        let dout = &g[bi * c * n..(bi + 1) * c * n];
                        let (dq, rest) = dqkv[base..base + 3 * c * n].split_at_mut(c * n);
                        let (dk, dv) = rest.split_at_mut(c * n);
                        // dV = dO P
                        gemm(c, n, n, dout, (n, 1), p, (n, 1), 0.0, dv);
                        // dP = dO^T V
                        gemm(n, c, n, dout, (1, n), v, (n, 1), 0.0, &mut dp);
                        for (prow, dprow) in p.chunks_exact(n).zip(dp.chunks_exact_mut(n)) {
                            let dot: f32 = prow.iter().zip(dprow.iter()).map(|(a, b)| a * b).sum();
                            for (d, &pv) in dprow.iter_mut().zip(prow) {
                                *d = pv * (*d - dot) * scale;
                            }
                        }
                        // dQ = K dS^T, dK = Q dS
                        gemm(c, n, n, k, (n, 1), &dp, (1, n), 0.0, dq);
                        gemm(c, n, n, q, (n, 1), &dp, (n, 1), 0.0, dk);
                    }
                    acc(&mut grads, nodes, *qkv, dqkv);
                }
            }
        }

        for node in &self.nodes {
            if let Op::Param(name) = &node.op {
                if node.needs_grad && !out.contains_key(name) {
                    out.insert(name.clone(), Tensor::zeros(node.value.shape()));
                }
            }
        }
        for (name, t) in &out {
            if !t.all_finite() {
                return Err(NnError::NonFinite(format!("gradient of {name}")));
            }
        }
        Ok(out)
    }
}
