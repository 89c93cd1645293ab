//! Naive f64 re-implementation of the U-Net forward pass, reading the same
//! parameter names. Used as a low-noise oracle for finite differences.

use std::collections::BTreeMap;

use terrafill::nn::{ParamStore, UNetConfig};

pub type Params64 = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

pub fn to_f64(store: &ParamStore) -> Params64 {
    store.iter().map(|(k, t)| (k.clone(), (t.shape().to_vec(), t.data().iter().map(|&v| v as f64).collect()))).collect()
}

#[derive(Clone)]
pub struct Act {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub d: Vec<f64>,
}

impl Act {
    fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.d[((b * self.c + c) * self.h + y) * self.w + x]
    }
}

fn conv(p: &Params64, name: &str, a: &Act) -> Act {
    let (ws, w) = &p[&format!("{name}.weight")];
    let (_, bias) = &p[&format!("{name}.bias")];
    let (co, ci, k) = (ws[0], ws[1], ws[2]);
    assert_eq!(ci, a.c);
    let pad = (k / 2) as isize;
    let mut d = vec![0.0; a.b * co * a.h * a.w];
    for b in 0..a.b {
        for o in 0..co {
            for y in 0..a.h {
                for x in 0..a.w {
                    let mut s = bias[o];
                    for c in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = y as isize + ky as isize - pad;
                                let ix = x as isize + kx as isize - pad;
                                if iy >= 0 && ix >= 0 && iy < a.h as isize && ix < a.w as isize {
                                    s += w[((o * ci + c) * k + ky) * k + kx] * a.at(b, c, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    d[((b * co + o) * a.h + y) * a.w + x] = s;
                }
            }
        }
    }
    Act { c: co, d, ..*a }
}

fn linear(p: &Params64, name: &str, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (ws, w) = &p[&format!("{name}.weight")];
    let (_, bias) = &p[&format!("{name}.bias")];
    let (o, i) = (ws[0], ws[1]);
    x.iter().map(|row| (0..o).map(|r| bias[r] + (0..i).map(|c| w[r * i + c] * row[c]).sum::<f64>()).collect()).collect()
}

fn silu(v: f64) -> f64 {
    v / (1.0 + (-v).exp())
}

fn norm_act(p: &Params64, name: &str, a: &Act, groups: usize, act: bool) -> Act {
    let (_, gamma) = &p[&format!("{name}.gamma")];
    let (_, beta) = &p[&format!("{name}.beta")];
    let cpg = a.c / groups;
    let mut out = a.clone();
    for b in 0..a.b {
        for g in 0..groups {
            let mut vals = Vec::new();
            for c in g * cpg..(g + 1) * cpg {
                for y in 0..a.h {
                    for x in 0..a.w {
                        vals.push(a.at(b, c, y, x));
                    }
                }
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = (var + 1e-5).sqrt();
            for c in g * cpg..(g + 1) * cpg {
                for y in 0..a.h {
                    for x in 0..a.w {
                        let i = ((b * a.c + c) * a.h + y) * a.w + x;
                        let v = (a.d[i] - mean) / sd * gamma[c] + beta[c];
                        out.d[i] = if act { silu(v) } else { v };
                    }
                }
            }
        }
    }
    out
}

fn add(a: &Act, b: &Act) -> Act {
    Act { d: a.d.iter().zip(&b.d).map(|(x, y)| x + y).collect(), ..*a }
}

fn res(p: &Params64, name: &str, x: &Act, temb: &[Vec<f64>], groups: usize) -> Act {
    let h = norm_act(p, &format!("{name}.norm1"), x, groups, true);
    let mut h = conv(p, &format!("{name}.conv1"), &h);
    let e = linear(p, &format!("{name}.temb"), temb);
    let hw = h.h * h.w;
    for b in 0..h.b {
        for c in 0..h.c {
            for i in 0..hw {
                h.d[(b * h.c + c) * hw + i] += e[b][c];
            }
        }
    }
    let h = norm_act(p, &format!("{name}.norm2"), &h, groups, true);
    let h = conv(p, &format!("{name}.conv2"), &h);
    let skip =
        if p.contains_key(&format!("{name}.skip.weight")) { conv(p, &format!("{name}.skip"), x) } else { x.clone() };
    add(&h, &skip)
}

fn pool(a: &Act) -> Act {
    let (h, w) = (a.h / 2, a.w / 2);
    let mut d = Vec::new();
    for b in 0..a.b {
        for c in 0..a.c {
            for y in 0..h {
                for x in 0..w {
                    d.push(
                        0.25 * (a.at(b, c, 2 * y, 2 * x)
                            + a.at(b, c, 2 * y + 1, 2 * x)
                            + a.at(b, c, 2 * y, 2 * x + 1)
                            + a.at(b, c, 2 * y + 1, 2 * x + 1)),
                    );
                }
            }
        }
    }
    Act { h, w, d, ..*a }
}

fn upsample(a: &Act) -> Act {
    let (h, w) = (a.h * 2, a.w * 2);
    let mut d = Vec::new();
    for b in 0..a.b {
        for c in 0..a.c {
            for y in 0..h {
                for x in 0..w {
                    d.push(a.at(b, c, y / 2, x / 2));
                }
            }
        }
    }
    Act { h, w, d, ..*a }
}

fn concat(a: &Act, s: &Act) -> Act {
    let hw = a.h * a.w;
    let mut d = Vec::new();
    for b in 0..a.b {
        d.extend_from_slice(&a.d[b * a.c * hw..(b + 1) * a.c * hw]);
        d.extend_from_slice(&s.d[b * s.c * hw..(b + 1) * s.c * hw]);
    }
    Act { c: a.c + s.c, d, ..*a }
}

/// Forward pass for a network without attention.
pub fn forward(p: &Params64, cfg: &UNetConfig, x: Act, t: &[usize]) -> Act {
    assert!(cfg.attention_levels.is_empty());
    let e = cfg.time_embed_dim;
    let half = e / 2;
    let emb: Vec<Vec<f64>> = t
        .iter()
        .map(|&ti| {
            let mut v = vec![0.0; e];
            for k in 0..half {
                let a = ti as f64 * 10000f64.powf(-2.0 * k as f64 / e as f64);
                v[k] = a.sin();
                v[half + k] = a.cos();
            }
            v
        })
        .collect();
    let temb: Vec<Vec<f64>> =
        linear(p, "time.fc1", &emb).into_iter().map(|r| r.into_iter().map(silu).collect()).collect();
    let temb: Vec<Vec<f64>> =
        linear(p, "time.fc2", &temb).into_iter().map(|r| r.into_iter().map(silu).collect()).collect();
    let g = cfg.groupnorm_groups;
    let levels = cfg.channel_mults.len();
    let mut h = conv(p, "conv_in", &x);
    let mut skips = Vec::new();
    for lv in 0..levels {
        for r in 0..cfg.num_res_blocks {
            h = res(p, &format!("down.{lv}.res.{r}"), &h, &temb, g);
            skips.push(h.clone());
        }
        if lv + 1 < levels {
            h = pool(&h);
        }
    }
    h = res(p, "mid.res", &h, &temb, g);
    for lv in (0..levels).rev() {
        for r in 0..cfg.num_res_blocks {
            let s = skips.pop().unwrap();
            h = res(p, &format!("up.{lv}.res.{r}"), &concat(&h, &s), &temb, g);
        }
        if lv > 0 {
            h = conv(p, &format!("up.{lv}.upsample"), &upsample(&h));
        }
    }
    let h = norm_act(p, "out.norm", &h, g, true);
    conv(p, "out.conv", &h)
}
