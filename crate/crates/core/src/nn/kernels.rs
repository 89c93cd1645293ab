//! Raw compute kernels on flat slices. Shapes are validated by the caller.

use matrixmultiply::sgemm;

/// `c (m x n) = a (m x k) * b (k x n) + beta * c`, with explicit
/// row/column strides for `a` and `b` so transposed views need no copies.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    debug_assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the debug assertions above spell out the bounds; callers pass
    // slices sized exactly for these extents.
    unsafe {
        sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfold one `(c, h, w)` image into `(c * k * k, h * w)` patches with zero
/// padding `k / 2`.
pub fn im2col(x: &[f32], c: usize, h: usize, w: usize, k: usize, col: &mut [f32]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for oy in 0..h {
                    let iy = oy as isize + dy;
                    let out = &mut dst[oy * w..(oy + 1) * w];
                    if iy < 0 || iy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    // valid ox range: 0 <= ox + dx < w
                    let lo = (-dx).max(0) as usize;
                    let hi = ((w as isize - dx).min(w as isize)).max(0) as usize;
                    out[..lo.min(w)].fill(0.0);
                    if hi > lo {
                        let s0 = (lo as isize + dx) as usize;
                        out[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    }
                    if hi < w {
                        out[hi.max(lo).min(w)..].fill(0.0);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate patch gradients back into an image.
pub fn col2im(col: &[f32], c: usize, h: usize, w: usize, k: usize, dx: &mut [f32]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let ddx = kx as isize - pad;
                for oy in 0..h {
                    let iy = oy as isize + dy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let lo = (-ddx).max(0) as usize;
                    let hi = ((w as isize - ddx).min(w as isize)).max(0) as usize;
                    if hi <= lo {
                        continue;
                    }
                    let s = &src[oy * w + lo..oy * w + hi];
                    let d0 = iy as usize * w + (lo as isize + ddx) as usize;
                    for (d, v) in plane[d0..d0 + (hi - lo)].iter_mut().zip(s) {
                        *d += v;
                    }
                }
            }
        }
    }
}

pub struct ConvShape {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

pub fn conv2d_forward(x: &[f32], weight: &[f32], bias: Option<&[f32]>, s: &ConvShape) -> Vec<f32> {
    let hw = s.h * s.w;
    let rows = s.c_in * s.k * s.k;
    let mut out = vec![0.0; s.batch * s.c_out * hw];
    let mut col = if s.k == 1 { Vec::new() } else { vec![0.0; rows * hw] };
    for b in 0..s.batch {
        let xb = &x[b * s.c_in * hw..(b + 1) * s.c_in * hw];
        let patches: &[f32] = if s.k == 1 {
            xb
        } else {
            im2col(xb, s.c_in, s.h, s.w, s.k, &mut col);
            &col
        };
        let ob = &mut out[b * s.c_out * hw..(b + 1) * s.c_out * hw];
        if let Some(bias) = bias {
            for (o, chunk) in ob.chunks_exact_mut(hw).enumerate() {
                chunk.fill(bias[o]);
            }
        }
        gemm(s.c_out, rows, hw, weight, (rows, 1), patches, (hw, 1), 1.0, ob);
    }
    out
}

/// Returns `(dx, dweight, dbias)`.
pub fn conv2d_backward(x: &[f32], weight: &[f32], dy: &[f32], s: &ConvShape) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let hw = s.h * s.w;
    let rows = s.c_in * s.k * s.k;
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; s.c_out];
    let mut col = vec![0.0; if s.k == 1 { 0 } else { rows * hw }];
    let mut dcol = vec![0.0; rows * hw];
    for b in 0..s.batch {
        let xb = &x[b * s.c_in * hw..(b + 1) * s.c_in * hw];
        let dyb = &dy[b * s.c_out * hw..(b + 1) * s.c_out * hw];
        let patches: &[f32] = if s.k == 1 {
            xb
        } else {
            im2col(xb, s.c_in, s.h, s.w, s.k, &mut col);
            &col
        };
        // dW += dY (c_out x hw) * patches^T (hw x rows)
        gemm(s.c_out, hw, rows, dyb, (hw, 1), patches, (1, hw), 1.0, &mut dw);
        for (o, chunk) in dyb.chunks_exact(hw).enumerate() {
            db[o] += chunk.iter().sum::<f32>();
        }
        // dpatches = W^T (rows x c_out) * dY (c_out x hw)
        gemm(rows, s.c_out, hw, weight, (1, rows), dyb, (hw, 1), 0.0, &mut dcol);
        let dxb = &mut dx[b * s.c_in * hw..(b + 1) * s.c_in * hw];
        if s.k == 1 {
            for (d, v) in dxb.iter_mut().zip(&dcol) {
                *d += v;
            }
        } else {
            col2im(&dcol, s.c_in, s.h, s.w, s.k, dxb);
        }
    }
    (dx, dw, db)
}
