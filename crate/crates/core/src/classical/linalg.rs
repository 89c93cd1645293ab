/// Solve `a x = b` for a dense row-major `n x n` system by LU decomposition
/// with partial pivoting. Returns `None` when a pivot falls below
/// `n * eps * ||a||_inf`.
pub fn solve_dense(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix is not n x n");
    let mut lu = a.to_vec();
    let mut x = b.to_vec();
    let norm = (0..n).map(|i| lu[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let tol = n as f64 * f64::EPSILON * norm.max(f64::MIN_POSITIVE);

    for col in 0..n {
        let (piv, pmax) =
            (col..n)
                .map(|r| (r, lu[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmax > tol) {
            return None;
        }
        if piv != col {
            for j in 0..n {
                lu.swap(col * n + j, piv * n + j);
            }
            x.swap(col, piv);
        }
        let d = lu[col * n + col];
        for r in col + 1..n {
            let f = lu[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            lu[r * n + col] = 0.0;
            for j in col + 1..n {
                lu[r * n + j] -= f * lu[col * n + j];
            }
            x[r] -= f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = x[row];
        for j in row + 1..n {
            s -= lu[row * n + j] * x[j];
        }
        x[row] = s / lu[row * n + row];
    }
    Some(x)
}
