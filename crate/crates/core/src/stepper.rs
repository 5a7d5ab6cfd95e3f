//! Implicit Euler with regularized reactions,
//!
//! ```text
//!   u^k - u^{k-1} - tau Lap F(u^k) - tau Q^eta(u^k) = 0,
//! ```
//!
//! solved per step by damped Newton on a block-tridiagonal system, with a
//! monotone fixed-point iteration as fallback.
//!
//! All residual norms in this module are in the `tau`-scaled form above
//! (the difference quotient multiplied by `tau`), measured in the max norm.

use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::{self, EntropyReport};
use crate::grid::{laplacian_into, Field, Grid1D};
use crate::linalg::{solve_tridiagonal, BlockTridiagonal, Mat3};
use crate::maps::{f_components, f_inverse, f_jacobian_raw, Triple};
use crate::model::ModelFunctions;
use crate::num::abs;
use crate::{Error, Result};

/// Componentwise floor applied to Newton iterates.
pub const POSITIVITY_FLOOR: f64 = 1e-14;
/// Consecutive projected Newton iterations tolerated before the fixed-point
/// fallback takes over.
const MAX_PROJECTED: usize = 5;
const MAX_DAMPING_HALVINGS: usize = 30;
/// Reaction signs: `A <-> B + C` consumes species 1 and produces 2 and 3.
pub const SIGMA: [f64; 3] = [-1.0, 1.0, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: [Field; 3],
    pub t: f64,
}

impl State {
    pub fn new(u: [Field; 3], t: f64) -> Result<Self> {
        let n = u[0].len();
        for f in &u[1..] {
            if f.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: f.len(),
                });
            }
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("state time"));
        }
        let s = State { u, t };
        if s.u.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        if s.u.iter().flatten().any(|x| *x < 0.0) {
            return Err(Error::Negative("state"));
        }
        Ok(s)
    }

    pub fn constant(grid: &Grid1D, values: [f64; 3]) -> Result<Self> {
        let n = grid.n();
        State::new(
            [vec![values[0]; n], vec![values[1]; n], vec![values[2]; n]],
            0.0,
        )
    }

    pub fn n(&self) -> usize {
        self.u[0].len()
    }

    pub fn at(&self, j: usize) -> [f64; 3] {
        [self.u[0][j], self.u[1][j], self.u[2][j]]
    }

    pub fn min(&self) -> f64 {
        self.u
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, x| m.min(*x))
    }

    fn check_grid(&self, grid: &Grid1D) -> Result<()> {
        grid.check_len(self.n())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub tau: f64,
    /// Reaction regularization; 0 disables it.
    pub eta: f64,
    /// Relaxation time. `f64::INFINITY` switches reactions off.
    pub eps: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Enforce `eta > 0` and `tau <= eps eta^2 / 2`.
    pub strict_tau: bool,
}

impl SchemeParams {
    pub fn new(tau: f64, eps: f64) -> Self {
        SchemeParams {
            tau,
            eta: 0.0,
            eps,
            newton_tol: 1e-10,
            newton_max: 50,
            strict_tau: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau", "must be positive and finite"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", "must be nonnegative and finite"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        if !(self.newton_tol > 0.0 && self.newton_tol.is_finite()) {
            return Err(Error::invalid("newton_tol", "must be positive and finite"));
        }
        if self.newton_max == 0 {
            return Err(Error::invalid("newton_max", "must be at least 1"));
        }
        if self.strict_tau {
            if self.eta <= 0.0 {
                return Err(Error::invalid("eta", "strict_tau requires eta > 0"));
            }
            let bound = self.eps * self.eta * self.eta / 2.0;
            if self.tau > bound {
                return Err(Error::invalid(
                    "tau",
                    alloc::format!("strict_tau requires tau <= eps eta^2 / 2 = {bound:e}"),
                ));
            }
        }
        Ok(())
    }
}

#[inline]
fn regularize(q: f64, eta: f64) -> f64 {
    if eta == 0.0 {
        q
    } else if q.is_infinite() {
        1.0 / eta
    } else {
        q / (1.0 + eta * q)
    }
}

/// Regularized rates `(a, b)` with `a = q1/(1 + eta q1)` and `b` the product
/// of the regularized `q2`, `q3`.
#[inline]
pub fn reaction_rates<M: ModelFunctions + ?Sized>(funcs: &M, u: [f64; 3], eta: f64) -> (f64, f64) {
    let a = regularize(funcs.q(0, u[0]), eta);
    let b = regularize(funcs.q(1, u[1]), eta) * regularize(funcs.q(2, u[2]), eta);
    (a, b)
}

#[inline]
fn q_eta_raw<M: ModelFunctions + ?Sized>(funcs: &M, u: [f64; 3], eta: f64, eps: f64) -> [f64; 3] {
    if eps.is_infinite() {
        return [0.0; 3];
    }
    let (a, b) = reaction_rates(funcs, u, eta);
    let r = (a - b) / eps;
    [-r, r, r]
}

/// `Q^eta(u)`, with `Q_1 = -Q_2 = -Q_3` exactly.
pub fn q_eta<M: ModelFunctions + ?Sized>(
    u: Triple,
    eta: f64,
    eps: f64,
    funcs: &M,
) -> Result<Triple> {
    Triple::new(u.u1(), u.u2(), u.u3())?;
    if !(eps > 0.0) || !(eta >= 0.0) {
        return Err(Error::invalid("eps/eta", "need eps > 0 and eta >= 0"));
    }
    Ok(Triple(q_eta_raw(funcs, u.0, eta, eps)))
}

/// `dQ^eta / du` at one cell.
pub fn q_eta_jacobian<M: ModelFunctions + ?Sized>(
    funcs: &M,
    u: [f64; 3],
    eta: f64,
    eps: f64,
) -> Mat3 {
    if eps.is_infinite() {
        return [[0.0; 3]; 3];
    }
    let reg = |i: usize| regularize(funcs.q(i, u[i]), eta);
    let dreg = |i: usize| {
        let e = 1.0 + eta * funcs.q(i, u[i]);
        funcs.dq(i, u[i]) / (e * e)
    };
    // gradient of a - b
    let g = [dreg(0), -dreg(1) * reg(2), -reg(1) * dreg(2)];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for c in 0..3 {
            m[i][c] = SIGMA[i] * g[c] / eps;
        }
    }
    m
}

/// Sample estimate of `K2 = sup_i Q^eta_{i,-}(u) / u_i` over the cells of
/// the given states.
pub fn reaction_lower_bound<M: ModelFunctions + ?Sized>(
    funcs: &M,
    states: &[&[Field; 3]],
    eta: f64,
    eps: f64,
) -> f64 {
    let mut k2 = 0.0f64;
    for u in states {
        for j in 0..u[0].len() {
            let c = [u[0][j], u[1][j], u[2][j]];
            let q = q_eta_raw(funcs, c, eta, eps);
            for i in 0..3 {
                if q[i] < 0.0 && c[i] > 0.0 {
                    k2 = k2.max(-q[i] / c[i]);
                }
            }
        }
    }
    k2
}

/// Step residual `R = (u - u_old)/tau - Lap F(u) - Q^eta(u)`.
pub fn step_residual<M: ModelFunctions + ?Sized>(
    u_new: &State,
    u_old: &State,
    grid: &Grid1D,
    p: &SchemeParams,
    funcs: &M,
) -> Result<[Field; 3]> {
    p.validate()?;
    u_new.check_grid(grid)?;
    u_old.check_grid(grid)?;
    let mut r = scaled_residual(&u_new.u, &u_old.u, grid.h(), p, funcs);
    for f in r.iter_mut() {
        f.iter_mut().for_each(|x| *x /= p.tau);
    }
    Ok(r)
}

fn scaled_residual<M: ModelFunctions + ?Sized>(
    u: &[Field; 3],
    u_old: &[Field; 3],
    h: f64,
    p: &SchemeParams,
    funcs: &M,
) -> [Field; 3] {
    let n = u[0].len();
    let mut big_f: [Field; 3] = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut q: [Field; 3] = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for j in 0..n {
        let c = [u[0][j], u[1][j], u[2][j]];
        let fc = f_components(funcs, c);
        let qc = q_eta_raw(funcs, c, p.eta, p.eps);
        for i in 0..3 {
            big_f[i][j] = fc[i];
            q[i][j] = qc[i];
        }
    }
    let mut out: [Field; 3] = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..3 {
        laplacian_into(&big_f[i], h, &mut out[i]);
        for j in 0..n {
            out[i][j] = u[i][j] - u_old[i][j] - p.tau * out[i][j] - p.tau * q[i][j];
        }
    }
    out
}

fn norm_inf(r: &[Field; 3]) -> f64 {
    r.iter().flatten().fold(0.0f64, |m, x| {
        if x.is_nan() {
            f64::INFINITY
        } else {
            m.max(abs(*x))
        }
    })
}

fn step_jacobian<M: ModelFunctions + ?Sized>(
    u: &[Field; 3],
    h: f64,
    p: &SchemeParams,
    funcs: &M,
) -> BlockTridiagonal<3> {
    let n = u[0].len();
    let s = p.tau / (h * h);
    let fp: Vec<Mat3> = (0..n)
        .map(|j| f_jacobian_raw(funcs, [u[0][j], u[1][j], u[2][j]]))
        .collect();
    let mut a = BlockTridiagonal::<3>::zeros(n);
    for j in 0..n {
        let c = [u[0][j], u[1][j], u[2][j]];
        let qp = q_eta_jacobian(funcs, c, p.eta, p.eps);
        let neighbours = if j == 0 || j == n - 1 { 1.0 } else { 2.0 };
        for r in 0..3 {
            for k in 0..3 {
                a.diag[j][r][k] = neighbours * s * fp[j][r][k] - p.tau * qp[r][k];
                if j > 0 {
                    a.lower[j][r][k] = -s * fp[j - 1][r][k];
                }
                if j + 1 < n {
                    a.upper[j][r][k] = -s * fp[j + 1][r][k];
                }
            }
            a.diag[j][r][r] += 1.0;
        }
    }
    a
}

enum NewtonOutcome {
    Converged([Field; 3]),
    /// Too many consecutive projected iterations.
    Stalled([Field; 3], f64),
}

fn newton_core<M: ModelFunctions + ?Sized>(
    u_old: &[Field; 3],
    grid: &Grid1D,
    p: &SchemeParams,
    funcs: &M,
) -> Result<NewtonOutcome> {
    let h = grid.h();
    let n = grid.n();
    let mut u = u_old.clone();
    for f in u.iter_mut() {
        f.iter_mut().for_each(|x| *x = x.max(POSITIVITY_FLOOR));
    }
    let mut r = scaled_residual(&u, u_old, h, p, funcs);
    let mut norm = norm_inf(&r);
    let mut projected_run = 0;
    for _ in 0..p.newton_max {
        if norm <= p.newton_tol {
            return Ok(NewtonOutcome::Converged(u));
        }
        let jac = step_jacobian(&u, h, p, funcs);
        let mut delta: Vec<[f64; 3]> = (0..n).map(|j| [-r[0][j], -r[1][j], -r[2][j]]).collect();
        jac.solve(&mut delta)?;

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_DAMPING_HALVINGS {
            let mut projected = false;
            let mut trial = u.clone();
            for i in 0..3 {
                for j in 0..n {
                    let x = u[i][j] + lambda * delta[j][i];
                    if !(x >= POSITIVITY_FLOOR) {
                        projected = true;
                    }
                    trial[i][j] = x.max(POSITIVITY_FLOOR);
                }
            }
            let tr = scaled_residual(&trial, u_old, h, p, funcs);
            let tn = norm_inf(&tr);
            if tn < norm {
                accepted = Some((trial, tr, tn, projected));
                break;
            }
            lambda *= 0.5;
        }
        let Some((trial, tr, tn, projected)) = accepted else {
            return Err(Error::Divergence {
                solver: "newton line search",
                iterations: p.newton_max,
                residual: norm,
                last_iterate: u.concat(),
            });
        };
        u = trial;
        r = tr;
        norm = tn;
        projected_run = if projected { projected_run + 1 } else { 0 };
        if projected_run > MAX_PROJECTED && norm > p.newton_tol {
            return Ok(NewtonOutcome::Stalled(u, norm));
        }
    }
    if norm <= p.newton_tol {
        return Ok(NewtonOutcome::Converged(u));
    }
    Err(Error::Divergence {
        solver: "newton",
        iterations: p.newton_max,
        residual: norm,
        last_iterate: u.concat(),
    })
}

/// One implicit step by damped Newton. Fails with a divergence error when
/// the iteration does not converge or keeps hitting the positivity floor.
pub fn newton_solve_step<M: ModelFunctions + ?Sized>(
    u_old: &State,
    grid: &Grid1D,
    p: &SchemeParams,
    funcs: &M,
) -> Result<State> {
    p.validate()?;
    u_old.check_grid(grid)?;
    match newton_core(&u_old.u, grid, p, funcs)? {
        NewtonOutcome::Converged(u) => Ok(State {
            u,
            t: u_old.t + p.tau,
        }),
        NewtonOutcome::Stalled(u, residual) => Err(Error::Divergence {
            solver: "newton (positivity projection)",
            iterations: p.newton_max,
            residual,
            last_iterate: u.concat(),
        }),
    }
}

/// Smallest admissible fixed-point shift `(1 + tau K2) / kappa1` for the
/// given states.
pub fn fixedpoint_shift<M: ModelFunctions + ?Sized>(
    funcs: &M,
    states: &[&[Field; 3]],
    p: &SchemeParams,
) -> f64 {
    (1.0 + p.tau * reaction_lower_bound(funcs, states, p.eta, p.eps)) / funcs.kappa1()
}

/// One implicit step by the monotone fixed-point iteration
///
/// ```text
///   u <- F^{-1}( (M - tau Lap)^{-1} (u_old + M F(u) - u + tau Q^eta(u)) ).
/// ```
///
/// `m` is raised to [`fixedpoint_shift`] of the current iterate whenever
/// that is larger, which keeps the right-hand side nonnegative.
pub fn fixedpoint_solve_step<M: ModelFunctions + ?Sized>(
    u_old: &State,
    grid: &Grid1D,
    p: &SchemeParams,
    funcs: &M,
    m: f64,
    max_iter: usize,
) -> Result<State> {
    p.validate()?;
    u_old.check_grid(grid)?;
    fixedpoint_from(&u_old.u, u_old.u.clone(), grid, p, funcs, m, max_iter).map(|u| State {
        u,
        t: u_old.t + p.tau,
    })
}

fn fixedpoint_from<M: ModelFunctions + ?Sized>(
    u_old: &[Field; 3],
    mut u: [Field; 3],
    grid: &Grid1D,
    p: &SchemeParams,
    funcs: &M,
    m: f64,
    max_iter: usize,
) -> Result<[Field; 3]> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid("M", "must be positive and finite"));
    }
    let n = grid.n();
    let h = grid.h();
    let s = p.tau / (h * h);
    let mut shift = m.max(fixedpoint_shift(funcs, &[u_old, &u], p));
    let sub: Vec<f64> = (0..n).map(|j| if j > 0 { -s } else { 0.0 }).collect();
    let sup: Vec<f64> = (0..n).map(|j| if j + 1 < n { -s } else { 0.0 }).collect();
    let mut norm = f64::INFINITY;
    for _ in 0..max_iter {
        norm = norm_inf(&scaled_residual(&u, u_old, h, p, funcs));
        if norm <= p.newton_tol {
            return Ok(u);
        }
        shift = shift.max(fixedpoint_shift(funcs, &[&u], p));
        let diag: Vec<f64> = (0..n)
            .map(|j| shift + if j == 0 || j == n - 1 { s } else { 2.0 * s })
            .collect();
        let mut rhs: [Field; 3] = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for j in 0..n {
            let c = [u[0][j], u[1][j], u[2][j]];
            let fc = f_components(funcs, c);
            let qc = q_eta_raw(funcs, c, p.eta, p.eps);
            for i in 0..3 {
                rhs[i][j] = u_old[i][j] + shift * fc[i] - c[i] + p.tau * qc[i];
            }
        }
        for i in 0..3 {
            solve_tridiagonal(&sub, &diag, &sup, &mut rhs[i])?;
        }
        for j in 0..n {
            // rounding can leave tiny negatives in an exactly zero target
            let y = Triple([rhs[0][j].max(0.0), rhs[1][j].max(0.0), rhs[2][j].max(0.0)]);
            let x = f_inverse(y, funcs, 1e-13)?;
            for i in 0..3 {
                u[i][j] = x.0[i];
            }
        }
    }
    Err(Error::Divergence {
        solver: "fixed point",
        iterations: max_iter,
        residual: norm,
        last_iterate: u.concat(),
    })
}

/// Newton, falling back to the fixed-point iteration when Newton keeps
/// projecting onto the positivity floor.
pub fn solve_step<M: ModelFunctions + ?Sized>(
    u_old: &State,
    grid: &Grid1D,
    p: &SchemeParams,
    funcs: &M,
    fallback_iter: usize,
) -> Result<State> {
    p.validate()?;
    u_old.check_grid(grid)?;
    let u = match newton_core(&u_old.u, grid, p, funcs)? {
        NewtonOutcome::Converged(u) => u,
        NewtonOutcome::Stalled(u, _) => {
            let m = fixedpoint_shift(funcs, &[&u_old.u, &u], p);
            fixedpoint_from(&u_old.u, u, grid, p, funcs, m, fallback_iter)?
        }
    };
    Ok(State {
        u,
        t: u_old.t + p.tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub t_final: f64,
    /// Halvings of `tau` allowed per step on solver failure; 0 keeps `tau`
    /// fixed.
    pub max_halvings: u32,
    /// Cap on fixed-point iterations when Newton falls back.
    pub fallback_iter: usize,
    /// Compute an [`EntropyReport`] after every step.
    pub reports: bool,
}

impl RunOptions {
    pub fn new(t_final: f64) -> Self {
        RunOptions {
            t_final,
            max_halvings: 10,
            fallback_iter: 5000,
            reports: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `states[k]` is the state at `t = k tau`; `states[0]` is the initial
    /// state.
    pub states: Vec<State>,
    /// One report per state, including the initial one, when requested.
    pub reports: Vec<EntropyReport>,
    /// Smallest value of any species over the whole run.
    pub min_u: f64,
    /// Number of step halvings taken.
    pub halvings: usize,
}

/// Number of steps `ceil(t_final / tau)`, forgiving rounding in the ratio.
pub fn step_count(t_final: f64, tau: f64) -> usize {
    let r = t_final / tau;
    let k = libm::round(r);
    if abs(r - k) <= 1e-9 * k.max(1.0) {
        k as usize
    } else {
        libm::ceil(r) as usize
    }
}

/// Runs the scheme from `u_init` to `t_final`.
///
/// Initial data must be strictly positive. A failed step is retried as two
/// half steps, recursively, up to `max_halvings` levels; stored states stay
/// on the uniform grid `k tau`.
pub fn run<M: ModelFunctions + ?Sized>(
    u_init: &State,
    grid: &Grid1D,
    p: &SchemeParams,
    funcs: &M,
    opts: &RunOptions,
) -> Result<Trajectory> {
    p.validate()?;
    u_init.check_grid(grid)?;
    if !(opts.t_final >= 0.0 && opts.t_final.is_finite()) {
        return Err(Error::invalid("t_final", "must be nonnegative and finite"));
    }
    if !(u_init.min() > 0.0) {
        return Err(Error::invalid(
            "u_init",
            "initial data must be strictly positive",
        ));
    }
    let steps = step_count(opts.t_final, p.tau);
    let mut states = Vec::with_capacity(steps + 1);
    let mut reports = Vec::new();
    let mut first = u_init.clone();
    first.t = 0.0;
    if opts.reports {
        reports.push(entropy::report(0, &first, grid, p, funcs)?);
    }
    let mut min_u = first.min();
    states.push(first);
    let mut halvings = 0;
    for k in 1..=steps {
        let prev = &states[k - 1];
        let mut next = advance(prev, grid, p, funcs, opts, 0, &mut halvings).map_err(|e| {
            Error::StepFailed {
                step: k,
                source: alloc::boxed::Box::new(e),
            }
        })?;
        next.t = k as f64 * p.tau;
        min_u = min_u.min(next.min());
        if opts.reports {
            reports.push(entropy::report(k, &next, grid, p, funcs)?);
        }
        states.push(next);
    }
    Ok(Trajectory {
        states,
        reports,
        min_u,
        halvings,
    })
}

fn advance<M: ModelFunctions + ?Sized>(
    prev: &State,
    grid: &Grid1D,
    p: &SchemeParams,
    funcs: &M,
    opts: &RunOptions,
    depth: u32,
    halvings: &mut usize,
) -> Result<State> {
    match solve_step(prev, grid, p, funcs, opts.fallback_iter) {
        Ok(s) => Ok(s),
        Err(e) if e.is_divergence() && depth < opts.max_halvings => {
            *halvings += 1;
            let half = SchemeParams {
                tau: 0.5 * p.tau,
                strict_tau: false,
                ..*p
            };
            let mid = advance(prev, grid, &half, funcs, opts, depth + 1, halvings)?;
            advance(&mid, grid, &half, funcs, opts, depth + 1, halvings)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::laplacian_neumann;
    use crate::model::{build_power_law, Identity, PowerLawParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{rngs::SmallRng, Rng, SeedableRng};

    #[test]
    fn q_eta_hand_values() {
        let u = Triple([2.0, 1.0, 1.0]);
        assert_eq!(q_eta(u, 0.0, 1.0, &Identity).unwrap().0, [-1.0, 1.0, 1.0]);
        let q = q_eta(u, 0.5, 1.0, &Identity).unwrap().0;
        for (got, want) in q.iter().zip([-5.0 / 9.0, 5.0 / 9.0, 5.0 / 9.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-15);
        }
        assert_eq!(
            q_eta(Triple([6.0, 2.0, 3.0]), 0.0, 1.0, &Identity)
                .unwrap()
                .0,
            [0.0; 3]
        );
        assert_eq!(q_eta(u, 0.0, f64::INFINITY, &Identity).unwrap().0, [0.0; 3]);
    }

    #[test]
    fn params_validation() {
        assert!(SchemeParams::new(-1.0, 1.0).validate().is_err());
        assert!(SchemeParams::new(1e-3, 0.0).validate().is_err());
        let mut p = SchemeParams::new(1e-3, 1.0);
        p.strict_tau = true;
        assert!(p.validate().is_err());
        p.eta = 0.1;
        assert!(p.validate().is_ok());
        p.tau = 1e-2;
        assert!(p.validate().is_err());
    }

    #[test]
    fn q_jacobian_matches_differences() {
        let m = build_power_law(PowerLawParams {
            beta: 2.0,
            delta: 9.0,
            ..PowerLawParams::REFERENCE
        })
        .unwrap();
        let u = [0.8, 1.3, 0.6];
        for eta in [0.0, 0.3] {
            let j = q_eta_jacobian(&m, u, eta, 0.5);
            for c in 0..3 {
                let h = 1e-6;
                let mut a = u;
                let mut b = u;
                a[c] += h;
                b[c] -= h;
                let (qa, qb) = (q_eta_raw(&m, a, eta, 0.5), q_eta_raw(&m, b, eta, 0.5));
                for r in 0..3 {
                    assert_relative_eq!(j[r][c], (qa[r] - qb[r]) / (2.0 * h), epsilon = 1e-7);
                }
            }
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let g = Grid1D::new(8, 1.0).unwrap();
        let s = State::constant(&g, [6.0, 2.0, 3.0]).unwrap();
        let p = SchemeParams::new(1e-2, 0.1);
        let r = step_residual(&s, &s, &g, &p, &Identity).unwrap();
        assert_eq!(norm_inf(&r), 0.0);
        let next = newton_solve_step(&s, &g, &p, &Identity).unwrap();
        assert_eq!(next.u, s.u);
        let fp = fixedpoint_solve_step(&s, &g, &p, &Identity, 1.0, 1).unwrap();
        assert_eq!(fp.u, s.u);
    }

    #[test]
    fn residual_without_reactions_is_minus_laplacian() {
        let g = Grid1D::new(6, 1.0).unwrap();
        let u = [
            g.sample(|x| 1.0 + x),
            g.sample(|x| 2.0 - x * x),
            g.sample(|x| 1.5 + x * x * x),
        ];
        let s = State::new(u.clone(), 0.0).unwrap();
        let p = SchemeParams::new(0.1, f64::INFINITY);
        let r = step_residual(&s, &s, &g, &p, &Identity).unwrap();
        for i in 0..3 {
            let lap = laplacian_neumann(&u[i], &g).unwrap();
            for j in 0..6 {
                assert_relative_eq!(r[i][j], -lap[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn newton_step_conserves_masses() {
        let m = build_power_law(PowerLawParams::REFERENCE).unwrap();
        let g = Grid1D::new(24, 1.0).unwrap();
        let u = [
            g.sample(|x| 1.0 + 0.3 * x),
            g.sample(|x| 0.5 + x * x),
            g.sample(|x| 2.0 - x),
        ];
        let s = State::new(u, 0.0).unwrap();
        let p = SchemeParams::new(1e-3, 1e-2);
        let next = newton_solve_step(&s, &g, &p, &m).unwrap();
        let mass = |st: &State, k: usize| -> f64 {
            (0..st.n()).map(|j| st.u[0][j] + st.u[k][j]).sum::<f64>() * g.h()
        };
        for k in [1, 2] {
            assert_relative_eq!(mass(&next, k), mass(&s, k), max_relative = 1e-12);
        }
        assert!(next.min() > 0.0);
    }

    #[test]
    fn fixed_point_agrees_with_newton() {
        let m = build_power_law(PowerLawParams::REFERENCE).unwrap();
        let g = Grid1D::new(32, 1.0).unwrap();
        let mut rng = SmallRng::seed_from_u64(11);
        let c: [f64; 6] = core::array::from_fn(|_| rng.gen_range(0.1..0.4));
        let u = [
            g.sample(|x| 1.0 + c[0] * libm::cos(core::f64::consts::PI * x)),
            g.sample(|x| 1.0 + c[1] * libm::sin(2.0 * x) + c[2] * x),
            g.sample(|x| 1.2 - c[3] * x * x + c[4] * libm::cos(3.0 * x)),
        ];
        let s = State::new(u, 0.0).unwrap();
        let mut p = SchemeParams::new(1e-3, 1.0);
        p.eta = 0.1;
        p.newton_tol = 1e-12;
        let a = newton_solve_step(&s, &g, &p, &m).unwrap();
        let shift = fixedpoint_shift(&m, &[&s.u], &p);
        let b = fixedpoint_solve_step(&s, &g, &p, &m, shift, 20_000).unwrap();
        for i in 0..3 {
            for j in 0..32 {
                assert!((a.u[i][j] - b.u[i][j]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn run_constant_equilibrium_stays_put() {
        let g = Grid1D::new(5, 1.0).unwrap();
        let s = State::constant(&g, [1.0, 1.0, 1.0]).unwrap();
        let p = SchemeParams::new(0.1, 1.0);
        let tr = run(&s, &g, &p, &Identity, &RunOptions::new(0.5)).unwrap();
        assert_eq!(tr.states.len(), 6);
        assert_relative_eq!(tr.states[5].t, 0.5, epsilon = 1e-15);
        for st in &tr.states {
            assert_eq!(st.u, s.u);
        }
        assert_eq!(tr.reports.len(), 6);
    }

    #[test]
    fn run_rejects_nonpositive_data() {
        let g = Grid1D::new(5, 1.0).unwrap();
        let s = State::constant(&g, [0.0, 1.0, 1.0]).unwrap();
        assert!(run(
            &s,
            &g,
            &SchemeParams::new(0.1, 1.0),
            &Identity,
            &RunOptions::new(0.5)
        )
        .is_err());
    }

    #[test]
    fn step_count_rounding() {
        assert_eq!(step_count(0.5, 1e-3), 500);
        assert_eq!(step_count(0.3, 0.1), 3);
        assert_eq!(step_count(0.35, 0.1), 4);
        assert_eq!(step_count(0.0, 0.1), 0);
    }

    proptest! {
        #[test]
        fn q_eta_antisymmetric_and_bounded(u in prop::array::uniform3(0.0f64..50.0), eta in 0.01f64..2.0, eps in 0.01f64..10.0) {
            let m = build_power_law(PowerLawParams::REFERENCE).unwrap();
            let q = q_eta(Triple(u), eta, eps, &m).unwrap().0;
            prop_assert_eq!(q[0] + q[1], 0.0);
            prop_assert_eq!(q[0] + q[2], 0.0);
            prop_assert!(q.iter().all(|x| x.abs() <= 2.0 / (eps * eta * eta)));
        }
    }
}
