//! Scalar quadrature and root finding.

use crate::num::abs;
use crate::{Error, Result};

const SIMPSON_MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`. Reversed limits give the negated integral.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -adaptive_simpson(f, b, a, tol);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || abs(delta) <= 15.0 * tol || m <= a || m >= b {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Bisection for a sign change of `f` in `[a, b]`, down to width `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Solves `f(s) = y` for a strictly increasing `f` on `[0, inf)` with
/// `f(0) = 0`.
///
/// The bracket starts at `[0, 1]` and is doubled until it contains the root;
/// Newton steps are taken when they stay inside the bracket, bisection
/// otherwise.
pub fn invert_increasing<F, D>(f: F, df: D, y: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !y.is_finite() {
        return Err(Error::NonFinite("scalar inversion target"));
    }
    if y <= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut grow = 0;
    while f(hi) < y {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 1100 || !hi.is_finite() {
            return Err(Error::Divergence {
                solver: "scalar inversion bracket",
                iterations: grow,
                residual: y,
                last_iterate: alloc::vec![hi],
            });
        }
    }
    root_increasing(|s| f(s) - y, df, lo, hi)
}

/// Root of an increasing `f` bracketed by `f(lo) <= 0 <= f(hi)`, by Newton
/// steps safeguarded with bisection.
pub fn root_increasing<F, D>(f: F, df: D, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut s = 0.5 * (lo + hi);
    for _ in 0..300 {
        let r = f(s);
        if r == 0.0 {
            return Ok(s);
        }
        if r > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let d = df(s);
        let newton = s - r / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if abs(next - s) <= f64::EPSILON * abs(s) {
            return Ok(next);
        }
        if hi - lo <= 4.0 * f64::EPSILON * abs(hi) {
            return Ok(s);
        }
        s = next;
    }
    if (hi - lo) <= 1e-12 * abs(hi).max(1.0) {
        return Ok(s);
    }
    Err(Error::Divergence {
        solver: "scalar root",
        iterations: 300,
        residual: f(s),
        last_iterate: alloc::vec![s],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_polynomial_exact() {
        let v = adaptive_simpson(&|x: f64| x * x * x - 2.0 * x, 0.0, 3.0, 1e-12);
        assert_relative_eq!(v, 81.0 / 4.0 - 9.0, epsilon = 1e-12);
        let r = adaptive_simpson(&|x: f64| x * x * x - 2.0 * x, 3.0, 0.0, 1e-12);
        assert_relative_eq!(r, -v, epsilon = 1e-14);
    }

    #[test]
    fn simpson_log_singularity() {
        // int_0^1 ln x dx = -1
        let v = adaptive_simpson(
            &|x: f64| if x > 0.0 { crate::num::ln(x) } else { -745.0 },
            0.0,
            1.0,
            1e-12,
        );
        assert!((v + 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn invert_cubic() {
        let s = invert_increasing(|s| s * s * s + s, |s| 3.0 * s * s + 1.0, 130.0).unwrap();
        assert_relative_eq!(s, 5.0, epsilon = 1e-13);
        assert_eq!(invert_increasing(|s| s, |_| 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn bisect_finds_golden_ratio() {
        let r = bisect(&|s: f64| s * s + s - 1.0, 0.0, 1.0, 1e-14);
        assert_relative_eq!(r, (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-13);
    }
}
