//! The diffusion map `F`, the equilibrium map `g`, their inverses, and the
//! entropy flux `J_i`.

use alloc::vec;

use crate::linalg::{Lu, Mat, Mat3};
use crate::model::{Check, ModelFunctions};
use crate::num::{abs, exp, ln, sqrt};
use crate::{quad, Error, Result};

/// A nonnegative concentration triple `(u1, u2, u3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple(pub [f64; 3]);

impl Triple {
    pub fn new(u1: f64, u2: f64, u3: f64) -> Result<Self> {
        let t = Triple([u1, u2, u3]);
        t.validate("triple")?;
        Ok(t)
    }

    pub fn u1(&self) -> f64 {
        self.0[0]
    }
    pub fn u2(&self) -> f64 {
        self.0[1]
    }
    pub fn u3(&self) -> f64 {
        self.0[2]
    }

    pub fn max_abs(&self) -> f64 {
        crate::num::max_abs(&self.0)
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        if self.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(what));
        }
        if self.0.iter().any(|x| *x < 0.0) {
            return Err(Error::Negative(what));
        }
        Ok(())
    }
}

/// Combined densities `v = u1 + u2`, `w = u1 + u3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub v: f64,
    pub w: f64,
}

impl Pair {
    pub fn new(v: f64, w: f64) -> Result<Self> {
        let p = Pair { v, w };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.v.is_finite() && self.w.is_finite()) {
            return Err(Error::NonFinite("pair"));
        }
        if self.v < 0.0 || self.w < 0.0 {
            return Err(Error::Negative("pair"));
        }
        Ok(())
    }
}

/// `F(u)` without input validation; used on hot paths.
#[inline]
pub fn f_components<M: ModelFunctions + ?Sized>(funcs: &M, u: [f64; 3]) -> [f64; 3] {
    [
        funcs.f(0, u[0]) + funcs.f12(u[0], u[1]),
        funcs.f(1, u[1]) + funcs.f21(u[0], u[1]),
        funcs.f(2, u[2]),
    ]
}

/// `F'(u)` without input validation.
#[inline]
pub fn f_jacobian_raw<M: ModelFunctions + ?Sized>(funcs: &M, u: [f64; 3]) -> Mat3 {
    let [d1f12, d2f12, d1f21, d2f21] = funcs.cross_partials(u[0], u[1]);
    [
        [funcs.df(0, u[0]) + d1f12, d2f12, 0.0],
        [d1f21, funcs.df(1, u[1]) + d2f21, 0.0],
        [0.0, 0.0, funcs.df(2, u[2])],
    ]
}

pub fn f_eval<M: ModelFunctions + ?Sized>(u: Triple, funcs: &M) -> Result<Triple> {
    u.validate("F argument")?;
    Ok(Triple(f_components(funcs, u.0)))
}

pub fn f_jacobian<M: ModelFunctions + ?Sized>(u: Triple, funcs: &M) -> Result<Mat3> {
    u.validate("F' argument")?;
    Ok(f_jacobian_raw(funcs, u.0))
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_MAX_HALVINGS: usize = 30;
/// Largest admissible log-coordinate step.
const MAX_LOG_STEP: f64 = 20.0;

/// Inverts `F` on the nonnegative octant.
///
/// The third component decouples and is a scalar inversion of `f3`. Zero
/// targets pin the matching unknown to zero (each `F_i` carries a factor
/// `u_i`); the remaining strictly positive block is solved by damped Newton
/// on `ln F(exp s) = ln y`, with step halving until the residual decreases.
/// Converged when `|F(u) - y|_inf <= tol (1 + |y|_inf)`.
pub fn f_inverse<M: ModelFunctions + ?Sized>(y: Triple, funcs: &M, tol: f64) -> Result<Triple> {
    y.validate("F target")?;
    let [y1, y2, y3] = y.0;
    let u3 = quad::invert_increasing(|s| funcs.f(2, s), |s| funcs.df(2, s), y3)?;
    let (u1, u2) = match (y1 > 0.0, y2 > 0.0) {
        (false, false) => (0.0, 0.0),
        (true, false) => {
            let u1 = quad::invert_increasing(
                |s| funcs.f(0, s) + funcs.f12(s, 0.0),
                |s| funcs.df(0, s) + funcs.cross_partials(s, 0.0)[0],
                y1,
            )?;
            (u1, 0.0)
        }
        (false, true) => {
            let u2 = quad::invert_increasing(
                |s| funcs.f(1, s) + funcs.f21(0.0, s),
                |s| funcs.df(1, s) + funcs.cross_partials(0.0, s)[3],
                y2,
            )?;
            (0.0, u2)
        }
        (true, true) => invert_cross_block(funcs, y1, y2, tol)?,
    };
    let out = [u1, u2, u3];
    let scale = tol * (1.0 + y.max_abs());
    let fu = f_components(funcs, out);
    let res = (0..3).fold(0.0f64, |m, i| m.max(abs(fu[i] - y.0[i])));
    if !(res <= scale) {
        return Err(Error::Divergence {
            solver: "F inverse",
            iterations: NEWTON_MAX_ITER,
            residual: res,
            last_iterate: vec![u1, u2, u3],
        });
    }
    Ok(Triple(out))
}

fn invert_cross_block<M: ModelFunctions + ?Sized>(
    funcs: &M,
    y1: f64,
    y2: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let target = [ln(y1), ln(y2)];
    let scale = tol * (1.0 + y1.max(y2));
    let eval = |s: [f64; 2]| -> ([f64; 2], [f64; 2]) {
        let u = [exp(s[0]), exp(s[1])];
        let f = [
            funcs.f(0, u[0]) + funcs.f12(u[0], u[1]),
            funcs.f(1, u[1]) + funcs.f21(u[0], u[1]),
        ];
        (u, f)
    };
    let log_res = |f: [f64; 2]| [ln(f[0]) - target[0], ln(f[1]) - target[1]];
    let norm = |r: [f64; 2]| abs(r[0]).max(abs(r[1]));

    // self-diffusion alone overestimates, since the cross terms are nonnegative
    let start =
        |i: usize, y: f64| quad::invert_increasing(|s| funcs.f(i, s), |s| funcs.df(i, s), y);
    let mut s = [ln(start(0, y1)?.max(1e-300)), ln(start(1, y2)?.max(1e-300))];
    let (mut u, mut f) = eval(s);
    let mut r = log_res(f);

    for _ in 0..NEWTON_MAX_ITER {
        if abs(f[0] - y1).max(abs(f[1] - y2)) <= scale {
            return Ok((u[0], u[1]));
        }
        // d ln F_i / d ln u_j = F'_ij u_j / F_i
        let [d1f12, d2f12, d1f21, d2f21] = funcs.cross_partials(u[0], u[1]);
        let jac: Mat<2> = [
            [
                (funcs.df(0, u[0]) + d1f12) * u[0] / f[0],
                d2f12 * u[1] / f[0],
            ],
            [
                d1f21 * u[0] / f[1],
                (funcs.df(1, u[1]) + d2f21) * u[1] / f[1],
            ],
        ];
        let mut step = Lu::new(jac)?.solve(&[-r[0], -r[1]]);
        let big = norm(step);
        if big > MAX_LOG_STEP {
            step = [step[0] * MAX_LOG_STEP / big, step[1] * MAX_LOG_STEP / big];
        }
        let current = norm(r);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let trial = [s[0] + lambda * step[0], s[1] + lambda * step[1]];
            let (tu, tf) = eval(trial);
            let tr = log_res(tf);
            if norm(tr) < current {
                s = trial;
                u = tu;
                f = tf;
                r = tr;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if abs(f[0] - y1).max(abs(f[1] - y2)) <= scale {
        return Ok((u[0], u[1]));
    }
    Err(Error::Divergence {
        solver: "F inverse",
        iterations: NEWTON_MAX_ITER,
        residual: abs(f[0] - y1).max(abs(f[1] - y2)),
        last_iterate: vec![u[0], u[1]],
    })
}

/// `q1^{-1}(q2(u2) q3(u3))`, the equilibrium value of `u1`.
pub fn equilibrium_u1<M: ModelFunctions + ?Sized>(u2: f64, u3: f64, funcs: &M) -> Result<f64> {
    funcs.q_inv(0, funcs.q(1, u2) * funcs.q(2, u3))
}

pub fn g_eval<M: ModelFunctions + ?Sized>(u2: f64, u3: f64, funcs: &M) -> Result<Pair> {
    Pair::new(u2, u3)?;
    let p = equilibrium_u1(u2, u3, funcs)?;
    Ok(Pair {
        v: u2 + p,
        w: u3 + p,
    })
}

/// Jacobian of `g` at strictly positive `(u2, u3)`, using
/// `dP/du2 = rho1(P) / rho2(u2)` with `rho = q / q'` and
/// `P = q1^{-1}(q2 q3)`.
pub fn g_jacobian<M: ModelFunctions + ?Sized>(u2: f64, u3: f64, funcs: &M) -> Result<Mat<2>> {
    if !(u2 > 0.0 && u3 > 0.0) {
        return Err(Error::invalid(
            "g argument",
            "Jacobian needs strictly positive arguments",
        ));
    }
    let p = equilibrium_u1(u2, u3, funcs)?;
    let rho1 = funcs.q_over_dq(0, p);
    let p2 = rho1 / funcs.q_over_dq(1, u2);
    let p3 = rho1 / funcs.q_over_dq(2, u3);
    Ok([[1.0 + p2, p3], [p2, 1.0 + p3]])
}

/// Inverts `g`.
///
/// Writing `P = u1`, the target fixes `u2 = v - P` and `u3 = w - P`, so `P`
/// is the root in `[0, min(v, w)]` of the increasing function
/// `q1(P) - q2(v - P) q3(w - P)`; it is found by safeguarded Newton. A zero
/// component of the target pins the matching unknown and `P` to zero.
pub fn g_inverse<M: ModelFunctions + ?Sized>(p: Pair, funcs: &M, tol: f64) -> Result<(f64, f64)> {
    p.validate()?;
    let Pair { v, w } = p;
    if v == 0.0 || w == 0.0 {
        return Ok((v, w));
    }
    let cap = v.min(w);
    let phi = |x: f64| funcs.q(0, x) - funcs.q(1, v - x) * funcs.q(2, w - x);
    let dphi = |x: f64| {
        funcs.dq(0, x)
            + funcs.dq(1, v - x) * funcs.q(2, w - x)
            + funcs.q(1, v - x) * funcs.dq(2, w - x)
    };
    let eq = quad::root_increasing(phi, dphi, 0.0, cap)?;
    let (u2, u3) = ((v - eq).max(0.0), (w - eq).max(0.0));
    let back = g_eval(u2, u3, funcs)?;
    let res = abs(back.v - v).max(abs(back.w - w));
    if !(res <= tol * (1.0 + v.max(w))) {
        return Err(Error::Divergence {
            solver: "g inverse",
            iterations: 1,
            residual: res,
            last_iterate: vec![u2, u3],
        });
    }
    Ok((u2, u3))
}

/// Closed-form inverse of `g` for `q_i = identity`: returns
/// `(u1, u2, u3)` with `u1 = u2 u3`, `u1 + u2 = v`, `u1 + u3 = w`.
pub fn closed_form_inverse(p: Pair) -> Result<Triple> {
    p.validate()?;
    let u2 = closed_form_u2(p.v, p.w);
    let u3 = closed_form_u2(p.w, p.v);
    Ok(Triple([u2 * u3, u2, u3]))
}

/// `u2(v, w) = (-(w - v + 1) + sqrt((w - v + 1)^2 + 4v)) / 2`, evaluated
/// without cancellation.
fn closed_form_u2(v: f64, w: f64) -> f64 {
    let b = w - v + 1.0;
    let root = sqrt(b * b + 4.0 * v);
    if b > 0.0 {
        2.0 * v / (b + root)
    } else {
        0.5 * (root - b)
    }
}

/// Golden-ratio switch point `(sqrt(5) - 1) / 2` of the identity-case flux.
pub const IDENTITY_SWITCH: f64 = 0.618_033_988_749_894_9;

/// Entropy flux `J_i(s) = int_0^s min{1, sqrt(q' f' / (q (1 + q)))} dy`.
///
/// Closed form when `f_i = q_i = identity`; otherwise the switch points of
/// the `min` are located by bisection and each smooth piece is integrated by
/// adaptive Simpson to an overall absolute tolerance of `1e-10`.
pub fn j_flux<M: ModelFunctions + ?Sized>(s: f64, i: usize, funcs: &M) -> f64 {
    if !(s > 0.0) {
        return 0.0;
    }
    if funcs.f_is_identity() && funcs.q_is_identity() {
        return j_flux_identity(s);
    }
    j_flux_quadrature(s, i, funcs)
}

pub fn j_flux_identity(s: f64) -> f64 {
    let s0 = IDENTITY_SWITCH;
    if s <= s0 {
        return s;
    }
    s0 + ln(0.5 + s + sqrt(s + s * s)) - ln(0.5 + s0 + sqrt(s0 + s0 * s0))
}

/// Quadrature route for `J_i`, available for any bundle.
pub fn j_flux_quadrature<M: ModelFunctions + ?Sized>(s: f64, i: usize, funcs: &M) -> f64 {
    if !(s > 0.0) {
        return 0.0;
    }
    // ratio - 1 where ratio = f' / ((q / q') (1 + q)); infinite at y = 0
    let excess = |y: f64| {
        let rho = funcs.q_over_dq(i, y);
        let r = funcs.df(i, y) / (rho * (1.0 + funcs.q(i, y)));
        if r.is_nan() {
            f64::INFINITY
        } else {
            r - 1.0
        }
    };
    let integrand = |y: f64| {
        let e = excess(y);
        if e >= 0.0 {
            1.0
        } else {
            sqrt(e + 1.0)
        }
    };

    const SAMPLES: usize = 64;
    let mut probes = alloc::vec::Vec::with_capacity(2 * SAMPLES + 2);
    for k in 0..=SAMPLES {
        probes.push(s * k as f64 / SAMPLES as f64);
    }
    let lo = (s * 1e-8).min(1e-6);
    probes.extend(crate::model::log_space(lo, s, SAMPLES));
    probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    probes.dedup();

    let mut knots = alloc::vec![0.0];
    for pair in probes.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if (excess(a) >= 0.0) != (excess(b) >= 0.0) {
            knots.push(quad::bisect(&excess, a, b, 1e-12 * s.max(1.0)));
        }
    }
    knots.push(s);

    let pieces = (knots.len() - 1) as f64;
    knots
        .windows(2)
        .map(|k| {
            let (a, b) = (k[0], k[1]);
            if b <= a {
                return 0.0;
            }
            if excess(0.5 * (a + b)) >= 0.0 {
                b - a
            } else {
                quad::adaptive_simpson(&integrand, a, b, 1e-11 / pieces)
            }
        })
        .sum()
}

/// Checks numerically that `q1^{-1}(q2(u2) q3(u3)) / u_i` settles to a limit
/// as `u_i -> 0` along the axes, for a few fixed values of the other
/// argument. Advisory only: a sampled sequence cannot prove continuity.
pub fn check_axis_continuity<M: ModelFunctions + ?Sized>(funcs: &M) -> Check {
    let mut c = Check {
        name: "axis_continuity",
        inequality:
            "|a(10^-11) - a(10^-12)| <= 1e-6 (1 + |a|), a(t) = q1^-1(q2 q3) / u_i with u_i = t",
        passed: true,
        failures: 0,
        witnesses: alloc::vec::Vec::new(),
        note: Some("advisory: sampled along u_i = 10^-k, k = 11, 12".into()),
    };
    for other in [0.5, 1.0, 2.0, 5.0] {
        for axis in [1usize, 2] {
            let quotient = |t: f64| {
                let (u2, u3) = if axis == 1 { (t, other) } else { (other, t) };
                equilibrium_u1(u2, u3, funcs)
                    .map(|p| p / t)
                    .unwrap_or(f64::NAN)
            };
            let (a, b) = (quotient(1e-11), quotient(1e-12));
            let point = if axis == 1 {
                [0.0, other, f64::NAN]
            } else {
                [other, 0.0, f64::NAN]
            };
            let diff = abs(a - b);
            if !(diff.is_finite() && diff <= 1e-6 * (1.0 + abs(b))) {
                c.passed = false;
                c.failures += 1;
                c.witnesses.push(crate::model::Witness {
                    point: Some(point),
                    lhs: diff,
                    rhs: 1e-6 * (1.0 + abs(b)),
                });
            }
        }
    }
    c
}
