//! Small row-major dense kernels for the inner loops, where allocating
//! nalgebra matrices per column would dominate.

/// In-place Cholesky of the leading `d × d` row-major block; the lower
/// triangle receives L. Returns false if the matrix is not positive definite.
pub(crate) fn cholesky_in_place(a: &mut [f64], d: usize) -> bool {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > 0.0) {
            return false;
        }
        let l = diag.sqrt();
        a[j * d + j] = l;
        for i in (j + 1)..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / l;
        }
    }
    true
}

/// Solves L x = b in place.
pub(crate) fn solve_lower(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * d + k] * b[k];
        }
        b[i] = v / l[i * d + i];
    }
}

/// Solves Lᵀ x = b in place.
pub(crate) fn solve_lower_transpose(l: &[f64], d: usize, b: &mut [f64]) {
    for i in (0..d).rev() {
        let mut v = b[i];
        for k in (i + 1)..d {
            v -= l[k * d + i] * b[k];
        }
        b[i] = v / l[i * d + i];
    }
}

/// Solves A x = b in place, destroying `a`.
pub(crate) fn cholesky_solve(a: &mut [f64], d: usize, b: &mut [f64]) -> bool {
    if !cholesky_in_place(a, d) {
        return false;
    }
    solve_lower(a, d, b);
    solve_lower_transpose(a, d, b);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let x = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = (0..3).map(|i| (0..3).map(|k| a[i * 3 + k] * x[k]).sum()).collect();
        let mut work = a;
        assert!(cholesky_solve(&mut work, 3, &mut b));
        for i in 0..3 {
            assert_abs_diff_eq!(b[i], x[i], epsilon = 1e-12);
        }
        let mut bad = [1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut bad, 2));
    }
}
