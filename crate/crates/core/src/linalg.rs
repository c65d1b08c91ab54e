//! Small dense least-squares helpers used by the color and chromophore fits.

/// Ridge added to the normal-matrix diagonal before solving.
pub const RIDGE: f64 = 1e-9;

/// Solves `A x = b` for a square system by Gaussian elimination with partial
/// pivoting. `a` is row-major `n x n`. Returns `None` when a pivot falls below
/// `tol` relative to the largest diagonal entry.
pub fn solve(a: &[f64], b: &[f64], n: usize, tol: f64) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[pivot * n + col].abs() <= tol * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
            }
            x.swap(pivot, col);
        }
        let d = m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in col + 1..n {
            s -= m[col * n + k] * x[k];
        }
        x[col] = s / m[col * n + col];
    }
    Some(x)
}

/// Ordinary least squares through the normal equations with a tiny ridge.
///
/// `design` holds one feature row per sample (each of length `p`), `targets`
/// holds one target vector per sample (each of length `q`). Returns the
/// `q x p` coefficient matrix, one row per target. `None` if the normal
/// matrix is rank-deficient.
pub fn least_squares(design: &[Vec<f64>], targets: &[Vec<f64>], p: usize, q: usize) -> Option<Vec<Vec<f64>>> {
    if design.len() < p {
        return None;
    }
    // Column scaling keeps the pivot test meaningful when features span
    // several orders of magnitude (quadratic XYZ terms).
    let mut col_scale = vec![0.0f64; p];
    for row in design {
        for (s, v) in col_scale.iter_mut().zip(row) {
            *s = s.max(v.abs());
        }
    }
    if col_scale.iter().any(|&s| s == 0.0) {
        return None;
    }
    let mut ata = vec![0.0; p * p];
    let mut atb = vec![vec![0.0; p]; q];
    for (row, t) in design.iter().zip(targets) {
        let r: Vec<f64> = row.iter().zip(&col_scale).map(|(v, s)| v / s).collect();
        for i in 0..p {
            for j in 0..p {
                ata[i * p + j] += r[i] * r[j];
            }
            for k in 0..q {
                atb[k][i] += r[i] * t[k];
            }
        }
    }
    // Rank is judged on the plain normal matrix; the ridge only stabilizes
    // the solve of designs that passed.
    solve(&ata, &vec![0.0; p], p, 1e-13)?;
    // The ridge is meant for the unscaled matrix; in scaled units it shrinks
    // with the column scale so noiseless fits stay exact.
    for i in 0..p {
        ata[i * p + i] += RIDGE / (col_scale[i] * col_scale[i]);
    }
    let mut out = Vec::with_capacity(q);
    for rhs in &atb {
        let x = solve(&ata, rhs, p, 0.0)?;
        out.push(x.iter().zip(&col_scale).map(|(c, s)| c / s).collect());
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let x = solve(&a, &[3.0, 5.0], 2, 1e-12).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12);
        assert!((x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_rejected() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(solve(&a, &[1.0, 2.0], 2, 1e-12).is_none());
    }
}
