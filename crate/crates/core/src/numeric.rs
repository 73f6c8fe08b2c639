//! Small shared numerical helpers: dense linear solve for the tiny Newton
//! systems (2x2 to 4x4) and a bracketing bisection.

use crate::error::{Error, Result};

/// Solve `A x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`. Sized for the n <= 4 systems used here.
pub(crate) fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Solver(format!("singular {n}x{n} Newton system")));
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let m = a[row * n + col] / d;
            if m == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= m * a[col * n + k];
            }
            b[row] -= m * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Ok(())
}

/// Bisection on a bracket with precomputed endpoint values. The endpoints
/// themselves are never re-evaluated, so one-sided limit values may be
/// supplied for them.
pub(crate) fn bisect<F>(mut f: F, a: f64, fa: f64, b: f64, fb: f64, iters: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Solver(format!(
            "bisect: endpoints do not bracket a root ({fa:.3e}, {fb:.3e})"
        )));
    }
    let (mut lo, mut hi, mut flo) = (a, b, fa);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break; // interval at floating-point resolution
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_3x3() {
        let mut a = [2.0, 1.0, -1.0, -3.0, -1.0, 2.0, -2.0, 1.0, 2.0];
        let mut b = [8.0, -11.0, -3.0];
        solve_dense(&mut a, &mut b, 3).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-12);
        assert!((b[1] - 3.0).abs() < 1e-12);
        assert!((b[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_reports_error() {
        let mut a = [1.0, 2.0, 2.0, 4.0];
        let mut b = [1.0, 2.0];
        assert!(solve_dense(&mut a, &mut b, 2).is_err());
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let f = |x: f64| Ok(x * x - 2.0);
        let r = bisect(f, 0.0, -2.0, 2.0, 2.0, 100).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }
}
