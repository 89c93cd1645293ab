mod common;

use common::oracles;
use proptest::prelude::*;
use rand::Rng;
use terrafill::grid::Heightmap;
use terrafill::maskgen::Mask;
use terrafill::metrics::{emd, mae, psnr, rmse, ssim, MetricReport, SsimParams};
use terrafill::rng::derive;

fn random_pair(seed: u64, side: usize) -> (Heightmap, Heightmap) {
    let mut rng = derive(seed, 0);
    let a = Heightmap::from_fn(side, side, |_, _| rng.random::<f32>()).unwrap();
    // b correlated with a so SSIM is not trivially near zero
    let b =
        Heightmap::from_fn(side, side, |x, y| (a.get(x, y) + rng.random_range(-0.2f32..0.2)).clamp(0.0, 1.0)).unwrap();
    (a, b)
}

#[test]
fn metrics_match_direct_definitions() {
    let p = SsimParams::default();
    for seed in 0..50 {
        let (a, b) = random_pair(seed, 16);
        let (va, vb) = (oracles::values(&a), oracles::values(&b));
        assert!((rmse(&a, &b).unwrap() - oracles::rmse(&va, &vb)).abs() < 1e-6);
        assert!((mae(&a, &b).unwrap() - oracles::mae(&va, &vb)).abs() < 1e-6);
        assert!((psnr(&a, &b, 1.0).unwrap() - oracles::psnr(&va, &vb)).abs() < 1e-6);
        assert!((emd(&a, &b).unwrap() - oracles::emd(&va, &vb)).abs() < 1e-6);
        assert!((ssim(&a, &b, &p).unwrap() - oracles::ssim(&a, &b)).abs() < 1e-6);
    }
}

#[test]
fn masked_metrics_match_direct_definitions() {
    for seed in 0..10 {
        let (a, b) = random_pair(seed, 16);
        let mut rng = derive(seed, 1);
        let m = Mask::from_fn(16, 16, |_, _| rng.random_bool(0.1));
        let r = MetricReport::masked(&a, &b, &m).unwrap().unwrap();
        let pick = |h: &Heightmap| -> Vec<f64> {
            h.values().iter().zip(m.bits()).filter(|(_, &k)| k).map(|(&v, _)| v as f64).collect()
        };
        let (va, vb) = (pick(&a), pick(&b));
        assert!((r.rmse - oracles::rmse(&va, &vb)).abs() < 1e-9);
        assert!((r.mae - oracles::mae(&va, &vb)).abs() < 1e-9);
        assert!((r.emd - oracles::emd(&va, &vb)).abs() < 1e-9);
        assert!((r.ssim - oracles::ssim_masked(&a, &b, &m)).abs() < 1e-9);
    }
    let (a, b) = random_pair(0, 16);
    assert_eq!(MetricReport::masked(&a, &b, &Mask::empty(16, 16)).unwrap(), None);
}

#[test]
fn emd_translation() {
    // values on a 2^-12 grid so the shift is exact in f32
    let mut rng = derive(9, 0);
    for c in [0.25f32, -0.125, 0.0625] {
        let a = Heightmap::from_fn(16, 16, |_, _| rng.random_range(1024..3072) as f32 / 4096.0).unwrap();
        let b = Heightmap::from_fn(16, 16, |x, y| a.get(x, y) + c).unwrap();
        assert!((emd(&a, &b).unwrap() - c.abs() as f64).abs() < 1e-9);
    }
    let a = Heightmap::new(2, 1, vec![0.0, 1.0]).unwrap();
    let b = Heightmap::new(2, 1, vec![0.5, 0.5]).unwrap();
    assert_eq!(emd(&a, &b).unwrap(), 0.5);
}

#[test]
fn anticorrelated_checkerboard_has_negative_ssim() {
    let a = Heightmap::from_fn(16, 16, |x, y| if (x + y) % 2 == 0 { 0.9 } else { 0.1 }).unwrap();
    let b = Heightmap::from_fn(16, 16, |x, y| 1.0 - a.get(x, y)).unwrap();
    assert!(ssim(&a, &b, &SsimParams::default()).unwrap() < 0.0);
}

fn field(side: usize) -> impl Strategy<Value = Vec<f32>> {
    proptest::collection::vec(0.0f32..=1.0, side * side)
}

fn hm(side: usize, v: Vec<f32>) -> Heightmap {
    Heightmap::new(side, side, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_and_ordered(va in field(8), vb in field(8)) {
        let (a, b) = (hm(8, va), hm(8, vb));
        prop_assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        prop_assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
        prop_assert_eq!(emd(&a, &b).unwrap(), emd(&b, &a).unwrap());
        prop_assert!(rmse(&a, &b).unwrap() >= mae(&a, &b).unwrap() - 1e-12);
        prop_assert!(mae(&a, &b).unwrap() >= emd(&a, &b).unwrap() - 1e-12);
    }

    #[test]
    fn emd_ignores_pixel_order(va in field(8), vb in field(8), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..64).collect();
        let mut rng = derive(seed, 0);
        for i in (1..64).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let (a, b) = (hm(8, va.clone()), hm(8, vb.clone()));
        let pa = hm(8, perm.iter().map(|&i| va[i]).collect());
        let pb = hm(8, perm.iter().map(|&i| vb[i]).collect());
        prop_assert_eq!(emd(&pa, &pb).unwrap(), emd(&a, &b).unwrap());
        prop_assert_eq!(emd(&a, &pa).unwrap(), 0.0);
    }

    #[test]
    fn ssim_bounds(va in field(8), vb in field(8)) {
        let (a, b) = (hm(8, va), hm(8, vb));
        let p = SsimParams::default();
        let s = ssim(&a, &b, &p).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((ssim(&a, &a, &p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_with_error(va in field(8), k in 1.1f32..4.0) {
        let a = hm(8, va);
        let b = Heightmap::from_fn(8, 8, |x, y| a.get(x, y) + 0.01).unwrap();
        let c = Heightmap::from_fn(8, 8, |x, y| a.get(x, y) + 0.01 * k).unwrap();
        prop_assert!(psnr(&a, &c, 1.0).unwrap() < psnr(&a, &b, 1.0).unwrap());
        prop_assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }
}
