//! Central finite-difference gradient checks against the tape.

use rand::Rng;
use terrafill::nn::{Graph, ParamStore, Result, Tensor, Var};
use terrafill::rng::SeededRng;

pub struct Report {
    pub checked: usize,
    pub passed: usize,
    pub worst: f64,
    pub failures: Vec<(String, usize, f64, f64)>,
}

impl Report {
    pub fn pass_rate(&self) -> f64 {
        self.passed as f64 / self.checked.max(1) as f64
    }
}

/// Relative error `|a - n| / max(|a|, |n|)`, zero when both vanish.
pub fn rel_err(a: f64, n: f64) -> f64 {
    let d = a.abs().max(n.abs());
    if d == 0.0 {
        0.0
    } else {
        (a - n).abs() / d
    }
}

/// Mean squared error against `target`, accumulated in f64 outside the tape
/// so the finite differences are not quantised by an f32 scalar.
fn eval<F>(store: &ParamStore, build: &F, target: &Tensor) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::no_grad();
    let out = build(&mut g, store)?;
    let o = g.value(out).data();
    let s: f64 = o.iter().zip(target.data()).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
    Ok(s / o.len() as f64)
}

/// Compare tape gradients of `mse(build(params), target)` with
/// `(L(p + eps) - L(p - eps)) / 2 eps` on `samples` coordinates drawn
/// uniformly over all parameters. `order4` switches to the five-point
/// central stencil.
pub fn check<F>(
    store: &ParamStore,
    build: F,
    target: &Tensor,
    samples: usize,
    eps: f32,
    tol: f64,
    order4: bool,
    rng: &mut SeededRng,
) -> Result<Report>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = build(&mut g, store)?;
    let t = g.input(target.clone())?;
    let l = g.mse(out, t)?;
    let grads = g.backward(l)?;
    let names: Vec<&String> = store.keys().collect();
    let sizes: Vec<usize> = names.iter().map(|n| store[*n].numel()).collect();
    let total: usize = sizes.iter().sum();
    let mut work = store.clone();
    let mut report = Report { checked: 0, passed: 0, worst: 0.0, failures: Vec::new() };
    for _ in 0..samples {
        let mut flat = rng.random_range(0..total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        let name = names[which].clone();
        let orig = store[&name].data()[flat];
        let mut at = |k: f32| -> Result<(f64, f64)> {
            let p = orig + k * eps;
            work.get_mut(&name).unwrap().data_mut()[flat] = p;
            Ok((p as f64, eval(&work, &build, target)?))
        };
        let numeric = if order4 {
            // (-f(2h) + 8 f(h) - 8 f(-h) + f(-2h)) / 12h
            let (p2, f2) = at(2.0)?;
            let (_, f1) = at(1.0)?;
            let (_, fm1) = at(-1.0)?;
            let (pm2, fm2) = at(-2.0)?;
            let h = (p2 - pm2) / 4.0;
            (-f2 + 8.0 * f1 - 8.0 * fm1 + fm2) / (12.0 * h)
        } else {
            let (p1, f1) = at(1.0)?;
            let (pm1, fm1) = at(-1.0)?;
            (f1 - fm1) / (p1 - pm1)
        };
        work.get_mut(&name).unwrap().data_mut()[flat] = orig;
        let analytic = grads.get(&name).map_or(0.0, |t| t.data()[flat] as f64);
        let e = rel_err(analytic, numeric);
        report.checked += 1;
        report.worst = report.worst.max(e);
        if e <= tol {
            report.passed += 1;
        } else {
            report.failures.push((name, flat, analytic, numeric));
        }
    }
    Ok(report)
}

/// Tape gradients of the U-Net noise loss `mse(eps_theta(x, t), target)`
/// against central differences of the f64 reference forward pass.
pub fn check_unet(
    net: &terrafill::nn::UNetParams,
    x: &Tensor,
    t: &[usize],
    target: &Tensor,
    samples: usize,
    eps: f64,
    tol: f64,
    rng: &mut SeededRng,
) -> Result<Report> {
    use super::reference_unet::{forward, to_f64, Act};
    let mut g = Graph::new();
    let xv = g.input(x.clone())?;
    let out = net.forward_graph(&mut g, xv, t)?;
    let tv = g.input(target.clone())?;
    let l = g.mse(out, tv)?;
    let grads = g.backward(l)?;

    let (b, c, h, w) = x.dims4()?;
    let input = Act { b, c, h, w, d: x.data().iter().map(|&v| v as f64).collect() };
    let tgt: Vec<f64> = target.data().iter().map(|&v| v as f64).collect();
    let loss = |p: &super::reference_unet::Params64| {
        let o = forward(p, &net.config, input.clone(), t);
        o.d.iter().zip(&tgt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / tgt.len() as f64
    };
    let mut work = to_f64(&net.store);
    let names: Vec<String> = work.keys().cloned().collect();
    let sizes: Vec<usize> = names.iter().map(|n| work[n].1.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut report = Report { checked: 0, passed: 0, worst: 0.0, failures: Vec::new() };
    for _ in 0..samples {
        let mut flat = rng.random_range(0..total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        let name = &names[which];
        let orig = work[name].1[flat];
        work.get_mut(name).unwrap().1[flat] = orig + eps;
        let up = loss(&work);
        work.get_mut(name).unwrap().1[flat] = orig - eps;
        let down = loss(&work);
        work.get_mut(name).unwrap().1[flat] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads.get(name).map_or(0.0, |t| t.data()[flat] as f64);
        let e = rel_err(analytic, numeric);
        report.checked += 1;
        report.worst = report.worst.max(e);
        if e <= tol {
            report.passed += 1;
        } else {
            report.failures.push((name.clone(), flat, analytic, numeric));
        }
    }
    Ok(report)
}
