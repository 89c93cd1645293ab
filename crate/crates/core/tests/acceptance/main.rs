//! One PASS/FAIL line per acceptance criterion. Criterion 9 is a soft
//! tripwire: its failure is reported but does not fail the process.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[path = "../common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{gradcheck, oracles};
use rand::Rng;
use rand_distr::StandardNormal;
use terrafill::classical::{
    idw_fill, known_pixels_preserved, ns_inpaint, IdwConfig, KrigingPredictor, NsConfig, VariogramKind, VariogramModel,
};
use terrafill::diffusion::{make_schedule, q_sample, repaint_inpaint, train, RepaintConfig, TrainConfig};
use terrafill::grid::{decode_hgt32, decode_tiff, encode_hgt32, encode_tiff, Heightmap};
use terrafill::harness::{
    make_sample, run_experiment, synthetic_dataset, write_reports, Corpus, DiffusionModel, Method, RunConfig,
};
use terrafill::maskgen::{decode_pbm, encode_pbm, Mask};
use terrafill::mesh::{heightmap_to_mesh, obj_string, parse_obj};
use terrafill::metrics::{emd, mae, psnr, rmse, ssim, SsimParams};
use terrafill::nn::{decode_unp1, encode_unp1, Tensor, UNetConfig, UNetParams};
use terrafill::rng::{derive, seeded, SeededRng};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn randn(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.sample::<f32, _>(StandardNormal))
}

fn schedule_correctness() -> Outcome {
    let s = make_schedule(1000, 1e-4, 0.02).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for t in [1usize, 250, 500, 1000] {
        let oracle: f64 = (1..=t).map(|i| 1.0 - (1e-4 + (0.02 - 1e-4) * (i - 1) as f64 / 999.0)).product();
        let rel = (s.alpha_bar(t) - oracle).abs() / oracle;
        worst = worst.max(rel);
        ensure!(rel <= 1e-10, "t={t}: {} vs {oracle}", s.alpha_bar(t));
    }
    Ok(format!("worst relative error {worst:.1e}"))
}

fn forward_statistics() -> Outcome {
    let s = make_schedule(1000, 1e-4, 0.02).map_err(|e| e.to_string())?;
    let x0 = Tensor::new(&[1, 1, 2, 2], vec![-1.0, -0.3, 0.4, 1.0]).unwrap();
    let n = 10_000usize;
    let mut rng = seeded(0);
    let mut worst = 0.0f64;
    for t in [100usize, 500, 900] {
        let mut draws: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
        for _ in 0..n {
            let eps = randn(&[1, 1, 2, 2], &mut rng);
            let xt = q_sample(&x0, t, &eps, &s).map_err(|e| e.to_string())?;
            for (d, &v) in draws.iter_mut().zip(xt.data()) {
                d.push(v as f64);
            }
        }
        let ab = s.alpha_bar(t);
        for (i, d) in draws.iter().enumerate() {
            let mean = d.iter().sum::<f64>() / n as f64;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let m4 = d.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
            let want_mean = ab.sqrt() * x0.data()[i] as f64;
            let want_var = 1.0 - ab;
            let z_mean = (mean - want_mean).abs() / (var / n as f64).sqrt();
            let z_var = (var - want_var).abs() / ((m4 - var * var) / n as f64).sqrt();
            worst = worst.max(z_mean).max(z_var);
            ensure!(z_mean <= 3.0, "t={t} pixel {i}: mean {mean} vs {want_mean} ({z_mean:.2} SE)");
            ensure!(z_var <= 3.0, "t={t} pixel {i}: variance {var} vs {want_var} ({z_var:.2} SE)");
        }
    }
    Ok(format!("largest deviation {worst:.2} SE"))
}

fn gradient_fidelity() -> Outcome {
    let mut rng = seeded(5);
    let mut p = UNetParams::init(UNetConfig::toy(), &mut rng).map_err(|e| e.to_string())?;
    // the zero-initialised output layers would otherwise hide most paths
    for (name, t) in p.store.iter_mut() {
        if name.starts_with("out.conv") || name.contains(".proj") {
            *t = randn(t.shape(), &mut rng);
            t.data_mut().iter_mut().for_each(|v| *v *= 0.3);
        }
    }
    let x = randn(&[2, 1, 8, 8], &mut rng);
    let eps = randn(&[2, 1, 8, 8], &mut rng);
    let r =
        gradcheck::check_unet(&p, &x, &[5, 730], &eps, 500, 1e-3, 1e-2, &mut seeded(6)).map_err(|e| e.to_string())?;
    let detail = format!("{}/{} coordinates within 1e-2", r.passed, r.checked);
    ensure!(r.checked == 500 && r.pass_rate() >= 0.99, "{detail}, worst {:.2e}", r.worst);
    Ok(detail)
}

struct Trained {
    at30: UNetParams,
    at60: UNetParams,
    train_cfg: TrainConfig,
    losses: Vec<f64>,
    time30: Duration,
}

fn train_desk_model() -> Result<Trained, String> {
    let data = synthetic_dataset(64, 32, 1000).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { epochs: 60, seed: 7, ..TrainConfig::desk() };
    let start = Instant::now();
    let mut snapshot = None;
    let mut time30 = Duration::ZERO;
    // the first 30 epochs of a 60-epoch run are exactly a 30-epoch run
    let out = train(&data, &cfg, &UNetConfig::desk(), |r, p| {
        if r.epoch == 30 {
            snapshot = Some(p.clone());
            time30 = start.elapsed();
        }
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    let losses = out.epochs.iter().map(|e| e.mean_loss).collect();
    let at60 = out.ema.unwrap_or(out.params);
    let at30 = snapshot.ok_or("no epoch-30 snapshot")?;
    Ok(Trained { at30, at60, train_cfg: cfg, losses, time30 })
}

fn trainability(m: &Trained) -> Outcome {
    let (first, last) = (m.losses[0], m.losses[29]);
    let detail =
        format!("epoch 1 {first:.4}, epoch 30 {last:.4} ({:.2}x) in {:.0} s", last / first, m.time30.as_secs_f64());
    ensure!((0.8..=1.2).contains(&first), "{detail}: first epoch outside [0.8, 1.2]");
    ensure!(last < 0.7 * first, "{detail}: not below 0.7x");
    ensure!(m.time30 < Duration::from_secs(20 * 60), "{detail}: over budget");
    Ok(detail)
}

fn repaint_invariants(m: &Trained) -> Outcome {
    let sched = m.train_cfg.schedule().map_err(|e| e.to_string())?;
    let cfg = RepaintConfig { jump_length: 10, num_resamples: 2, inference_steps: Some(100) };
    let run = RunConfig::default();
    for id in 0..20 {
        let s = make_sample(&run, &Corpus::default(), id).map_err(|e| e.to_string())?;
        let go = || repaint_inpaint(&m.at30, &sched, &s.degraded, &s.mask, &cfg, &mut derive(33, id as u64));
        let out = go().map_err(|e| e.to_string())?;
        ensure!(known_pixels_preserved(&s.truth, &out, &s.mask), "pair {id}: known pixels changed");
        ensure!(out.values().iter().all(|v| (0.0..=1.0).contains(v)), "pair {id}: output outside [0, 1]");
        ensure!(go().map_err(|e| e.to_string())?.bit_eq(&out), "pair {id}: not reproducible");
    }
    Ok("20 pairs: known pixels bit-exact, range [0, 1], reproducible".into())
}

fn baseline_oracles() -> Outcome {
    let (mut idw_worst, mut krige_worst) = (0.0f64, 0.0f64);
    for case in 0..20u64 {
        let (h, m) = oracles::random_case(&mut derive(100, case), 12);
        let cfg = IdwConfig::default();
        let out = idw_fill(&h, &m, cfg).map_err(|e| e.to_string())?;
        for i in (0..h.len()).filter(|&i| m.bits()[i]) {
            let (x, y) = (i % h.width(), i / h.width());
            let want = oracles::idw(&h, &m, x, y, cfg.neighbors, cfg.power);
            idw_worst = idw_worst.max((out.values()[i] as f64 - want).abs());
        }
    }
    ensure!(idw_worst < 1e-6, "IDW off by {idw_worst:.2e}");
    let kinds = [VariogramKind::Linear, VariogramKind::Spherical, VariogramKind::Exponential];
    for case in 0..20u64 {
        let mut rng = derive(200, case);
        let (h, m) = oracles::random_case(&mut rng, 3);
        let model = VariogramModel {
            kind: kinds[case as usize % 3],
            nugget: rng.random_range(0.0..0.05),
            sill: rng.random_range(0.01..1.0),
            range: rng.random_range(2.0..8.0),
        };
        let p = KrigingPredictor::new(&h, &m, model, 81).map_err(|e| e.to_string())?;
        for i in (0..h.len()).filter(|&i| m.bits()[i]) {
            let (x, y) = (i % h.width(), i / h.width());
            let got = p.raw_estimate(x, y).map_err(|e| e.to_string())?;
            krige_worst = krige_worst.max((got - oracles::kriging(&h, &m, &model, x, y)).abs());
        }
    }
    ensure!(krige_worst < 1e-8, "kriging off by {krige_worst:.2e}");
    for case in 0..10 {
        let (_, m) = oracles::random_case(&mut derive(400, case), 1);
        let h = Heightmap::filled(m.width(), m.height(), 0.375).unwrap();
        let out = ns_inpaint(&h, &m, NsConfig::default()).map_err(|e| e.to_string())?;
        ensure!(out.bit_eq(&h), "Navier-Stokes moved a constant field (case {case})");
    }
    let ramp = Heightmap::from_fn(24, 12, |x, _| x as f32 / 23.0).unwrap();
    let gap = Mask::from_fn(24, 12, |x, _| x == 11);
    let out = ns_inpaint(&ramp, &gap, NsConfig::default()).map_err(|e| e.to_string())?;
    let ramp_err = (0..12).map(|y| (out.get(11, y) - ramp.get(11, y)).abs()).fold(0.0f32, f32::max);
    ensure!(ramp_err < 1e-3, "ramp gap off by {ramp_err:.2e}");
    Ok(format!("IDW {idw_worst:.1e}, kriging {krige_worst:.1e}, ramp gap {ramp_err:.1e}"))
}

fn metric_oracles() -> Outcome {
    let p = SsimParams::default();
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let mut rng = derive(seed, 0);
        let a = Heightmap::from_fn(16, 16, |_, _| rng.random::<f32>()).unwrap();
        let b =
            Heightmap::from_fn(16, 16, |x, y| (a.get(x, y) + rng.random_range(-0.2f32..0.2)).clamp(0.0, 1.0)).unwrap();
        let (va, vb) = (oracles::values(&a), oracles::values(&b));
        let err = |e: terrafill::metrics::MetricsError| e.to_string();
        let diffs = [
            rmse(&a, &b).map_err(err)? - oracles::rmse(&va, &vb),
            mae(&a, &b).map_err(err)? - oracles::mae(&va, &vb),
            psnr(&a, &b, 1.0).map_err(err)? - oracles::psnr(&va, &vb),
            emd(&a, &b).map_err(err)? - oracles::emd(&va, &vb),
            ssim(&a, &b, &p).map_err(err)? - oracles::ssim(&a, &b),
        ];
        for d in diffs {
            worst = worst.max(d.abs());
        }
    }
    ensure!(worst < 1e-6, "metrics off by {worst:.2e}");
    let mut rng = derive(9, 0);
    let mut shift_worst = 0.0f64;
    for c in [0.25f32, -0.125, 0.0625] {
        let a = Heightmap::from_fn(16, 16, |_, _| rng.random_range(1024..3072) as f32 / 4096.0).unwrap();
        let b = Heightmap::from_fn(16, 16, |x, y| a.get(x, y) + c).unwrap();
        shift_worst = shift_worst.max((emd(&a, &b).map_err(|e| e.to_string())? - c.abs() as f64).abs());
    }
    ensure!(shift_worst < 1e-9, "EMD translation off by {shift_worst:.2e}");
    Ok(format!("worst {worst:.1e}, EMD translation {shift_worst:.1e}"))
}

struct Evaluation {
    masked_rmse: BTreeMap<String, f64>,
}

fn harness_integrity(m: &Trained) -> Result<(String, Evaluation), String> {
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cfg = RunConfig { n_samples: 50, seed: 1, jobs, ..RunConfig::default() };
    ensure!(cfg.methods == Method::ALL, "desk evaluation must run every method");
    let sched = m.train_cfg.schedule().map_err(|e| e.to_string())?;
    let model = DiffusionModel { model: &m.at60, schedule: &sched };
    let run = run_experiment(&cfg, &Corpus::default(), Some(model)).map_err(|e| e.to_string())?;
    ensure!(run.dropped.is_empty(), "dropped samples: {:?}", run.dropped);
    ensure!(run.outcomes.len() == 50, "{} outcomes", run.outcomes.len());
    for o in &run.outcomes {
        ensure!(o.outputs.len() == Method::ALL.len(), "sample {} has {} outputs", o.sample.id, o.outputs.len());
        for (method, out) in &o.outputs {
            ensure!(
                known_pixels_preserved(&o.sample.truth, out, &o.sample.mask),
                "sample {}: {method} changed known pixels",
                o.sample.id
            );
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let paths = write_reports(dir.path(), &cfg, &run, &[]).map_err(|e| e.to_string())?;

    // independent re-aggregation straight from the CSV text
    let mut rdr = csv::Reader::from_path(&paths.csv).map_err(|e| e.to_string())?;
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or(format!("no column {name}"));
    let method_col = col("method")?;
    let metric_cols: Vec<(String, usize)> =
        ["rmse", "mae", "emd", "ssim", "rmse_masked", "mae_masked", "emd_masked", "ssim_masked"]
            .iter()
            .map(|n| col(n).map(|c| (n.to_string(), c)))
            .collect::<Result<_, _>>()?;
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        for (name, c) in &metric_cols {
            let v: f64 = row[*c].parse().map_err(|_| format!("bad {name} value {}", &row[*c]))?;
            let e = sums.entry((row[method_col].to_string(), name.clone())).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&paths.summary_json).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut masked_rmse = BTreeMap::new();
    let rows = json["methods"].as_array().ok_or("summary has no methods")?;
    ensure!(rows.len() == 4, "summary has {} methods", rows.len());
    for r in rows {
        let method = r["method"].as_str().ok_or("method name")?.to_string();
        for (name, _) in &metric_cols {
            let (scope, metric) = match name.strip_suffix("_masked") {
                Some(base) => ("masked", base),
                None => ("full", name.as_str()),
            };
            let (sum, n) =
                sums.get(&(method.clone(), name.clone())).copied().ok_or(format!("{method} missing from CSV"))?;
            ensure!(n == 50, "{method}: {n} rows");
            let want = r[scope][metric].as_f64().ok_or(format!("{method} {scope} {metric}"))?;
            worst = worst.max((sum / n as f64 - want).abs());
        }
        masked_rmse.insert(method, r["masked"]["rmse"].as_f64().unwrap_or(f64::NAN));
    }
    ensure!(worst < 1e-9, "re-aggregation differs by {worst:.2e}");
    Ok((format!("200 records, identity holds, re-aggregation within {worst:.1e}"), Evaluation { masked_rmse }))
}

fn directional_quality(e: &Evaluation) -> Outcome {
    let ours = e.masked_rmse["repaint"];
    let (best_name, best) = e
        .masked_rmse
        .iter()
        .filter(|(k, _)| k.as_str() != "repaint")
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, v)| (k.clone(), *v))
        .ok_or("no classical baseline")?;
    let detail = format!("masked RMSE repaint {ours:.4} vs {best_name} {best:.4} ({:.2}x, bar 1.25x)", ours / best);
    ensure!(ours <= 1.25 * best, "{detail}");
    Ok(detail)
}

fn format_round_trips() -> Outcome {
    let mut rng = derive(77, 0);
    for (w, h) in [(1usize, 1usize), (5, 3), (33, 17), (128, 128)] {
        let g = Heightmap::from_fn(
            w,
            h,
            |_, _| if rng.random_bool(0.1) { f32::NAN } else { rng.random_range(-1e4f32..1e4) },
        )
        .unwrap();
        ensure!(decode_tiff(&encode_tiff(&g)).map_err(|e| e.to_string())?.bit_eq(&g), "TIFF {w}x{h}");
        ensure!(decode_hgt32(&encode_hgt32(&g)).map_err(|e| e.to_string())?.bit_eq(&g), "HGT32 {w}x{h}");
        let m = Mask::from_fn(w, h, |_, _| rng.random_bool(0.3));
        ensure!(decode_pbm(&encode_pbm(&m)).map_err(|e| e.to_string())? == m, "PBM {w}x{h}");
    }
    let p = UNetParams::init(UNetConfig::desk(), &mut derive(78, 0)).map_err(|e| e.to_string())?;
    let bytes = encode_unp1(&p.store);
    let back = decode_unp1(&bytes).map_err(|e| e.to_string())?;
    ensure!(back.len() == p.store.len(), "UNP1 tensor count");
    for (k, t) in &p.store {
        let same = back.get(k).is_some_and(|b| {
            b.shape() == t.shape() && b.data().iter().zip(t.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        });
        ensure!(same, "UNP1 tensor {k}");
    }
    for (w, h) in [(2usize, 2usize), (7, 4), (32, 32)] {
        let g = Heightmap::from_fn(w, h, |_, _| rng.random::<f32>()).unwrap();
        let m = Mask::from_fn(w, h, |_, _| rng.random_bool(0.2));
        let mesh = heightmap_to_mesh(&g, Some(&m), 30.0).map_err(|e| e.to_string())?;
        let parsed = parse_obj(&obj_string(&mesh, "t.mtl")).map_err(|e| e.to_string())?;
        ensure!(parsed.vertices.len() == w * h, "OBJ {w}x{h}: {} vertices", parsed.vertices.len());
        ensure!(parsed.faces.len() == 2 * (w - 1) * (h - 1), "OBJ {w}x{h}: {} faces", parsed.faces.len());
    }
    Ok(format!("grids, masks, {} checkpoint tensors and meshes", p.store.len()))
}

struct Line {
    soft: bool,
    passed: bool,
}

fn report(lines: &mut Vec<Line>, n: usize, title: &str, budget: Duration, soft: bool, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let elapsed = start.elapsed();
    let result = match result {
        Ok(d) if elapsed > budget => {
            Err(format!("{d}; took {:.1} s, budget {} s", elapsed.as_secs_f64(), budget.as_secs()))
        }
        r => r,
    };
    let (passed, detail) = match &result {
        Ok(d) => (true, d.as_str()),
        Err(d) => (false, d.as_str()),
    };
    let tag = match (passed, soft) {
        (true, _) => "PASS",
        (false, false) => "FAIL",
        (false, true) => "FAIL (soft)",
    };
    println!("{tag} {n:>2} {title} [{:.1} s] {detail}", elapsed.as_secs_f64());
    lines.push(Line { soft, passed });
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as --nocapture; none apply here
    let mut lines = Vec::new();
    let mins = |m: u64| Duration::from_secs(60 * m);
    report(&mut lines, 1, "schedule correctness", Duration::from_secs(1), false, schedule_correctness);
    report(&mut lines, 2, "forward-process statistics", Duration::from_secs(30), false, forward_statistics);
    report(&mut lines, 3, "gradient fidelity", mins(2), false, gradient_fidelity);

    println!("     training the desk model for 60 epochs...");
    let trained = catch_unwind(train_desk_model).unwrap_or_else(|_| Err("training panicked".into()));
    let trained = trained.as_ref().map_err(|e| e.clone());
    report(&mut lines, 4, "trainability", mins(20), false, || trainability(trained.clone()?));
    report(&mut lines, 5, "repaint invariants", mins(5), false, || repaint_invariants(trained.clone()?));
    report(&mut lines, 6, "baseline oracles", mins(1), false, baseline_oracles);
    report(&mut lines, 7, "metric oracles", mins(1), false, metric_oracles);

    let mut evaluation = None;
    report(&mut lines, 8, "paired-harness integrity", mins(30), false, || {
        let (detail, e) = harness_integrity(trained.clone()?)?;
        evaluation = Some(e);
        Ok(detail)
    });
    report(&mut lines, 9, "directional quality", mins(30), true, || {
        directional_quality(evaluation.as_ref().ok_or("no desk evaluation")?)
    });
    report(&mut lines, 10, "format round-trips", mins(1), false, format_round_trips);

    let hard_failures = lines.iter().filter(|l| !l.passed && !l.soft).count();
    let soft_failures = lines.iter().filter(|l| !l.passed && l.soft).count();
    let passed = lines.iter().filter(|l| l.passed).count();
    println!("{passed}/{} passed, {hard_failures} hard failures, {soft_failures} soft failures", lines.len());
    if hard_failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
