use rand::Rng;

use super::{GridError, Heightmap, Result};
use crate::rng::SeededRng;

/// Diamond-square fractal terrain on a `side x side` grid, `side = 2^k + 1`.
/// The random displacement amplitude is multiplied by `roughness` at every
/// subdivision level, so small roughness gives a nearly planar surface.
/// Values are unnormalized (roughly `[-2, 2]`).
pub fn synth_terrain(rng: &mut SeededRng, side: usize, roughness: f32) -> Result<Heightmap> {
    if side < 2 || !(side - 1).is_power_of_two() {
        return Err(GridError::BadSide(side));
    }
    if !(roughness > 0.0 && roughness <= 1.0) {
        return Err(GridError::InvalidParameter(format!("roughness {roughness} outside (0, 1]")));
    }
    let n = side;
    let mut z = vec![0f64; n * n];
    let idx = |x: usize, y: usize| y * n + x;
    for (x, y) in [(0, 0), (n - 1, 0), (0, n - 1), (n - 1, n - 1)] {
        z[idx(x, y)] = rng.random_range(-1.0..1.0);
    }

    let mut step = n - 1;
    let mut amp = roughness as f64;
    while step > 1 {
        let half = step / 2;
        // diamond: centre of each square
        for y in (half..n).step_by(step) {
            for x in (half..n).step_by(step) {
                let avg = (z[idx(x - half, y - half)]
                    + z[idx(x + half, y - half)]
                    + z[idx(x - half, y + half)]
                    + z[idx(x + half, y + half)])
                    / 4.0;
                z[idx(x, y)] = avg + amp * rng.random_range(-1.0..1.0);
            }
        }
        // square: edge midpoints, averaging the in-bounds neighbours
        for y in (0..n).step_by(half) {
            let x_start = if (y / half).is_multiple_of(2) { half } else { 0 };
            for x in (x_start..n).step_by(step) {
                let mut sum = 0.0;
                let mut cnt = 0.0;
                if x >= half {
                    sum += z[idx(x - half, y)];
                    cnt += 1.0;
                }
                if x + half < n {
                    sum += z[idx(x + half, y)];
                    cnt += 1.0;
                }
                if y >= half {
                    sum += z[idx(x, y - half)];
                    cnt += 1.0;
                }
                if y + half < n {
                    sum += z[idx(x, y + half)];
                    cnt += 1.0;
                }
                z[idx(x, y)] = sum / cnt + amp * rng.random_range(-1.0..1.0);
            }
        }
        step = half;
        amp *= roughness as f64;
    }
    Heightmap::new(n, n, z.into_iter().map(|v| v as f32).collect())
}
