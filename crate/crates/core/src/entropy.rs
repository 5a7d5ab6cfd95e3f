//! Entropy functionals, dissipation terms and the duality monitor.
//!
//! The entropy density is `h(u) = sum_i int_1^{u_i} ln q_i(s) ds` and its
//! regularized version replaces `q_i` by `q_i / (1 + eta q_i)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{integrate, laplacian_into, Field, Grid1D};
use crate::maps::{closed_form_inverse, f_components, g_inverse, Pair};
use crate::model::{ModelFunctions, CERTIFIED_DELTA};
use crate::num::{abs, ln, ln_1p, xlogx};
use crate::stepper::{reaction_rates, SchemeParams, State};
use crate::{quad, Error, Result};

/// Stand-in for zero inside logarithms of generic bundles.
const LOG_CLAMP: f64 = 1e-300;
/// Cells below this value are evaluated at the clamp in the `T` weights.
pub const SMALL_U: f64 = 1e-12;
const QUAD_TOL: f64 = 1e-13;

/// `int_1^s ln q_i(r) dr`.
///
/// Uses the bundle's closed form when it has one. Otherwise integrates by
/// parts, `s ln q_i(s) - int_1^s r q_i'(r) / q_i(r) dr`, whose integrand is
/// bounded at zero for power-like `q_i`.
pub fn h_density<M: ModelFunctions + ?Sized>(funcs: &M, i: usize, s: f64) -> f64 {
    if let Some(v) = funcs.entropy_primitive(i, s) {
        return v;
    }
    let boundary = match funcs.q(i, s) {
        q if s > 0.0 && q > 0.0 => s * ln(q),
        // underflowed q: s ln q -> 0 for power-like q
        _ => 0.0,
    };
    let integrand = |r: f64| {
        // where q underflows, move right until the quotient is defined
        let mut r = r.max(LOG_CLAMP);
        loop {
            let v = r / funcs.q_over_dq(i, r);
            if v.is_finite() || r >= 1e-3 {
                return v;
            }
            r *= 1e10;
        }
    };
    boundary - quad::adaptive_simpson(&integrand, 1.0, s.max(0.0), QUAD_TOL)
}

/// `int_1^s ln(1 + eta q_i(r)) dr`, the amount by which regularization
/// lowers the density.
pub fn regularization_density<M: ModelFunctions + ?Sized>(
    funcs: &M,
    i: usize,
    s: f64,
    eta: f64,
) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let s = s.max(0.0);
    if funcs.q_is_identity() {
        let prim = |x: f64| (1.0 + eta * x) * ln_1p(eta * x) / eta - x;
        return prim(s) - prim(1.0);
    }
    quad::adaptive_simpson(&|r: f64| ln_1p(eta * funcs.q(i, r)), 1.0, s, QUAD_TOL)
}

pub fn h_eta_density<M: ModelFunctions + ?Sized>(funcs: &M, i: usize, s: f64, eta: f64) -> f64 {
    h_density(funcs, i, s) - regularization_density(funcs, i, s, eta)
}

/// Pointwise density `sum_i h_i(u_i)`.
pub fn h_point<M: ModelFunctions + ?Sized>(funcs: &M, u: [f64; 3], eta: f64) -> f64 {
    (0..3).map(|i| h_eta_density(funcs, i, u[i], eta)).sum()
}

pub fn h_eval<M: ModelFunctions + ?Sized>(u: &State, grid: &Grid1D, funcs: &M) -> Result<f64> {
    h_eta_eval(u, grid, 0.0, funcs)
}

pub fn h_eta_eval<M: ModelFunctions + ?Sized>(
    u: &State,
    grid: &Grid1D,
    eta: f64,
    funcs: &M,
) -> Result<f64> {
    grid.check_len(u.n())?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid("eta", "must be nonnegative and finite"));
    }
    let dens: Vec<f64> = (0..u.n()).map(|j| h_point(funcs, u.at(j), eta)).collect();
    Ok(integrate(&dens, grid))
}

/// Per-cell weights of the gradient dissipation and the resulting integral.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationTerms {
    /// `t[k][j]` is `T_{k+1}` at cell `j`.
    pub t: [Field; 4],
    /// `delta int (T1 |D u1|^2 + T2 |D u2|^2) + int T3 |D u3|^2` with face
    /// differences and face-averaged weights.
    pub d_grad: f64,
    pub delta: f64,
    /// Cells violating `T4^2 <= 2 (1 - delta)^2 T1 T2`.
    pub violations: Vec<usize>,
    /// Cells where some `u_i < SMALL_U` was raised to `SMALL_U`.
    pub clamped: usize,
}

/// Gradient dissipation of the regularized entropy.
///
/// ```text
///   T1 = q1'/(q1 (1 + eta q1)) (f1' + d1 f12)
///   T2 = q2'/(q2 (1 + eta q2)) (f2' + d2 f21)
///   T3 = q3'/(q3 (1 + eta q3)) f3'
///   T4 = q1'/(q1 (1 + eta q1)) d2 f12 + q2'/(q2 (1 + eta q2)) d1 f21
/// ```
///
/// The per-cell inequality `T4^2 <= 2 (1 - delta)^2 T1 T2` is evaluated
/// through [`ModelFunctions::weak_cross_sides`], which is the same
/// inequality multiplied through by positive factors.
pub fn dissipation_terms<M: ModelFunctions + ?Sized>(
    u: &State,
    grid: &Grid1D,
    eta: f64,
    funcs: &M,
) -> Result<DissipationTerms> {
    grid.check_len(u.n())?;
    let n = u.n();
    let delta = CERTIFIED_DELTA;
    let mut t: [Field; 4] = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut violations = Vec::new();
    let mut clamped = 0;
    for j in 0..n {
        let raw = u.at(j);
        if raw.iter().any(|x| *x < SMALL_U) {
            clamped += 1;
        }
        let c = raw.map(|x| x.max(SMALL_U));
        let w = |i: usize| 1.0 / (funcs.q_over_dq(i, c[i]) * (1.0 + eta * funcs.q(i, c[i])));
        let [d1f12, d2f12, d1f21, d2f21] = funcs.cross_partials(c[0], c[1]);
        t[0][j] = w(0) * (funcs.df(0, c[0]) + d1f12);
        t[1][j] = w(1) * (funcs.df(1, c[1]) + d2f21);
        t[2][j] = w(2) * funcs.df(2, c[2]);
        t[3][j] = w(0) * d2f12 + w(1) * d1f21;
        match funcs.weak_cross_sides(c[0], c[1], eta, delta) {
            Some((l, r)) if l <= r => {}
            _ => violations.push(j),
        }
    }
    let h = grid.h();
    let mut d_grad = 0.0;
    for j in 0..n - 1 {
        let avg = |k: usize| 0.5 * (t[k][j] + t[k][j + 1]);
        let grad = |i: usize| (u.u[i][j + 1] - u.u[i][j]) / h;
        let g = [grad(0), grad(1), grad(2)];
        d_grad +=
            h * (delta * (avg(0) * g[0] * g[0] + avg(1) * g[1] * g[1]) + avg(2) * g[2] * g[2]);
    }
    Ok(DissipationTerms {
        t,
        d_grad,
        delta,
        violations,
        clamped,
    })
}

/// `(a - b)(ln a - ln b)` with the conventions `0` when both vanish and
/// `+inf` when exactly one does.
#[inline]
fn rate_product(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a <= 0.0 || b <= 0.0 {
        f64::INFINITY
    } else {
        (a - b) * (ln(a) - ln(b))
    }
}

/// `-int Q^eta . (h^eta)' = (1/eps) int (a - b)(ln a - ln b)` with the
/// regularized rates `a`, `b`.
pub fn reaction_dissipation<M: ModelFunctions + ?Sized>(
    u: &State,
    grid: &Grid1D,
    eta: f64,
    eps: f64,
    funcs: &M,
) -> Result<f64> {
    grid.check_len(u.n())?;
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "must be positive"));
    }
    if eps.is_infinite() {
        return Ok(0.0);
    }
    let dens: Vec<f64> = (0..u.n())
        .map(|j| {
            let (a, b) = reaction_rates(funcs, u.at(j), eta);
            rate_product(a, b)
        })
        .collect();
    Ok(integrate(&dens, grid) / eps)
}

/// `int |q1(u1) - q2(u2) q3(u3)|`.
pub fn defect_l1<M: ModelFunctions + ?Sized>(u: &State, grid: &Grid1D, funcs: &M) -> Result<f64> {
    grid.check_len(u.n())?;
    let dens: Vec<f64> = (0..u.n())
        .map(|j| {
            let c = u.at(j);
            abs(funcs.q(0, c[0]) - funcs.q(1, c[1]) * funcs.q(2, c[2]))
        })
        .collect();
    Ok(integrate(&dens, grid))
}

fn check_pair_fields(v: &[f64], w: &[f64], grid: &Grid1D) -> Result<()> {
    grid.check_len(v.len())?;
    grid.check_len(w.len())
}

/// Limit entropy: `h` at the equilibrium reconstruction `u = (v - u2, u2,
/// u3)` with `(u2, u3) = g^{-1}(v, w)`.
pub fn h0_eval<M: ModelFunctions + ?Sized>(
    v: &[f64],
    w: &[f64],
    grid: &Grid1D,
    funcs: &M,
) -> Result<f64> {
    check_pair_fields(v, w, grid)?;
    let mut dens = Vec::with_capacity(v.len());
    for j in 0..v.len() {
        let (u2, u3) = g_inverse(Pair { v: v[j], w: w[j] }, funcs, 1e-12)?;
        let u1 = (v[j] - u2).max(0.0);
        dens.push(h_point(funcs, [u1, u2, u3], 0.0));
    }
    Ok(integrate(&dens, grid))
}

/// Closed-form limit entropy for `q_i = identity`, density
/// `sum_i u_i (ln u_i - 1)` at the explicit reconstruction. It differs from
/// [`h0_eval`] by the constant 3 per unit volume (the `+1` terms).
pub fn h0_closed_form(v: &[f64], w: &[f64], grid: &Grid1D) -> Result<f64> {
    check_pair_fields(v, w, grid)?;
    let mut dens = Vec::with_capacity(v.len());
    for j in 0..v.len() {
        let u = closed_form_inverse(Pair { v: v[j], w: w[j] })?;
        dens.push(u.0.iter().map(|s| xlogx(*s) - s).sum());
    }
    Ok(integrate(&dens, grid))
}

/// Per-step monitor row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyReport {
    pub step: usize,
    pub t: f64,
    pub h_eta: f64,
    pub d_grad: f64,
    pub d_reac: f64,
    pub mass12: f64,
    pub mass13: f64,
    pub defect_l1: f64,
    pub min_u: f64,
}

pub fn report<M: ModelFunctions + ?Sized>(
    step: usize,
    u: &State,
    grid: &Grid1D,
    p: &SchemeParams,
    funcs: &M,
) -> Result<EntropyReport> {
    let n = u.n();
    let m12: Vec<f64> = (0..n).map(|j| u.u[0][j] + u.u[1][j]).collect();
    let m13: Vec<f64> = (0..n).map(|j| u.u[0][j] + u.u[2][j]).collect();
    Ok(EntropyReport {
        step,
        t: u.t,
        h_eta: h_eta_eval(u, grid, p.eta, funcs)?,
        d_grad: dissipation_terms(u, grid, p.eta, funcs)?.d_grad,
        d_reac: reaction_dissipation(u, grid, p.eta, p.eps, funcs)?,
        mass12: integrate(&m12, grid),
        mass13: integrate(&m13, grid),
        defect_l1: defect_l1(u, grid, funcs)?,
        min_u: u.min(),
    })
}

/// Accumulated duality quantities along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    /// `tau sum_k int mu^k (v^k)^2`.
    pub a: f64,
    /// `tau sum_k int mu^k`.
    pub b: f64,
    /// `a / (1 + b)`.
    pub ratio: f64,
    /// Per step `k >= 1`: `max_j |v^k - v^{k-1} - tau Lap(mu^k v^k)|`.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Duality monitor for `v = 2 u1 + u2 + u3`, `mu = (2 F1 + F2 + F3) / v`.
///
/// Since `2 Q1 + Q2 + Q3 = 0`, `v` solves `v^k - v^{k-1} = tau Lap(mu^k v^k)`
/// up to the step solver residual. States must be consecutive time levels
/// `tau` apart and strictly positive.
pub fn duality_monitor<M: ModelFunctions + ?Sized>(
    states: &[State],
    grid: &Grid1D,
    tau: f64,
    funcs: &M,
) -> Result<DualityReport> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", "must be positive"));
    }
    let n = grid.n();
    let combos = |s: &State| -> Result<(Field, Field)> {
        grid.check_len(s.n())?;
        let mut v = vec![0.0; n];
        let mut mv = vec![0.0; n];
        for j in 0..n {
            let c = s.at(j);
            let f = f_components(funcs, c);
            v[j] = 2.0 * c[0] + c[1] + c[2];
            mv[j] = 2.0 * f[0] + f[1] + f[2];
        }
        if v.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::invalid(
                "states",
                "duality monitor needs strictly positive states",
            ));
        }
        Ok((v, mv))
    };
    let mut a = 0.0;
    let mut b = 0.0;
    let mut residuals = Vec::with_capacity(states.len().saturating_sub(1));
    let mut lap = vec![0.0; n];
    let Some(first) = states.first() else {
        return Ok(DualityReport {
            a,
            b,
            ratio: 0.0,
            residuals,
            max_residual: 0.0,
        });
    };
    let (mut v_prev, _) = combos(first)?;
    for s in &states[1..] {
        let (v, mv) = combos(s)?;
        let mu_v2: Vec<f64> = (0..n).map(|j| mv[j] * v[j]).collect();
        let mu: Vec<f64> = (0..n).map(|j| mv[j] / v[j]).collect();
        a += tau * integrate(&mu_v2, grid);
        b += tau * integrate(&mu, grid);
        laplacian_into(&mv, grid.h(), &mut lap);
        let r = (0..n).fold(0.0f64, |m, j| m.max(abs(v[j] - v_prev[j] - tau * lap[j])));
        residuals.push(r);
        v_prev = v;
    }
    let max_residual = residuals.iter().fold(0.0f64, |m, x| m.max(*x));
    Ok(DualityReport {
        a,
        b,
        ratio: a / (1.0 + b),
        residuals,
        max_residual,
    })
}
