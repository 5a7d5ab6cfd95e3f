//! The reduced system in `v = u1 + u2`, `w = u1 + u3`,
//!
//! ```text
//!   d_t v = Lap (F1 + F2)(u),   d_t w = Lap (F1 + F3)(u),   u = u(v, w),
//! ```
//!
//! where `u(v, w)` is the equilibrium reconstruction through `g^{-1}`, and
//! the sweep comparing the full system against it as `eps -> 0`.

use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::h_point;
use crate::grid::{integrate, laplacian_into, Field, Grid1D};
use crate::linalg::{BlockTridiagonal, Mat};
use crate::maps::{
    closed_form_inverse, equilibrium_u1, f_components, f_jacobian_raw, g_inverse, Pair,
};
use crate::model::ModelFunctions;
use crate::num::{abs, sqrt};
use crate::stepper::{run, step_count, RunOptions, SchemeParams, State, POSITIVITY_FLOOR};
use crate::{Error, Result};

const G_INVERSE_TOL: f64 = 1e-12;

/// Initial data on the reaction equilibrium: `u1 = q1^{-1}(q2(u2) q3(u3))`.
pub fn well_prepared_init<M: ModelFunctions + ?Sized>(
    u2: &[f64],
    u3: &[f64],
    grid: &Grid1D,
    funcs: &M,
) -> Result<State> {
    grid.check_len(u2.len())?;
    grid.check_len(u3.len())?;
    let u1 = u2
        .iter()
        .zip(u3)
        .map(|(a, b)| equilibrium_u1(*a, *b, funcs))
        .collect::<Result<Field>>()?;
    State::new([u1, u2.to_vec(), u3.to_vec()], 0.0)
}

/// How the reduced system recovers `(u1, u2, u3)` from `(v, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reconstruction {
    /// Closed form when every `q_i` is the identity, Newton otherwise.
    #[default]
    Auto,
    Newton,
    /// Closed form; only valid for `q_i = identity`.
    ClosedForm,
}

/// Equilibrium triple and `(dP/du2, dP/du3)` with `P = u1`.
fn reconstruct<M: ModelFunctions + ?Sized>(
    funcs: &M,
    v: f64,
    w: f64,
    closed: bool,
) -> Result<([f64; 3], f64, f64)> {
    let u = if closed {
        closed_form_inverse(Pair { v, w })?.0
    } else {
        let (u2, u3) = g_inverse(Pair { v, w }, funcs, G_INVERSE_TOL)?;
        [equilibrium_u1(u2, u3, funcs)?, u2, u3]
    };
    let rho1 = funcs.q_over_dq(0, u[0]);
    let p2 = rho1 / funcs.q_over_dq(1, u[1]);
    let p3 = rho1 / funcs.q_over_dq(2, u[2]);
    Ok((u, p2, p3))
}

/// Reconstructed fields `(u1, u2, u3)` for a `(v, w)` pair of fields.
pub fn reconstruct_fields<M: ModelFunctions + ?Sized>(
    v: &[f64],
    w: &[f64],
    funcs: &M,
    how: Reconstruction,
) -> Result<[Field; 3]> {
    let closed = use_closed_form(funcs, how)?;
    let n = v.len();
    if w.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: w.len(),
        });
    }
    let mut out: [Field; 3] = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for j in 0..n {
        let (u, _, _) = reconstruct(funcs, v[j], w[j], closed)?;
        for i in 0..3 {
            out[i][j] = u[i];
        }
    }
    Ok(out)
}

fn use_closed_form<M: ModelFunctions + ?Sized>(funcs: &M, how: Reconstruction) -> Result<bool> {
    match how {
        Reconstruction::Auto => Ok(funcs.q_is_identity()),
        Reconstruction::Newton => Ok(false),
        Reconstruction::ClosedForm if funcs.q_is_identity() => Ok(true),
        Reconstruction::ClosedForm => Err(Error::invalid(
            "reconstruction",
            "closed form needs q_i = identity",
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitTrajectory {
    /// `v[k]`, `w[k]` at `t = k tau`, index 0 the initial data.
    pub v: Vec<Field>,
    pub w: Vec<Field>,
    /// Limit entropy `int h(u(v, w))` at each level.
    pub h0: Vec<f64>,
    pub tau: f64,
}

impl LimitTrajectory {
    pub fn steps(&self) -> usize {
        self.v.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }
}

struct LimitCell {
    g: [f64; 2],
    /// `d(G1, G2) / d(v, w)`.
    dg: Mat<2>,
}

fn limit_cell<M: ModelFunctions + ?Sized>(
    funcs: &M,
    v: f64,
    w: f64,
    closed: bool,
) -> Result<LimitCell> {
    let (u, p2, p3) = reconstruct(funcs, v, w, closed)?;
    let f = f_components(funcs, u);
    let j = f_jacobian_raw(funcs, u);
    // dF/du2 and dF/du3 along the constraint u1 = P(u2, u3)
    let d2: [f64; 3] = core::array::from_fn(|r| j[r][0] * p2 + j[r][1]);
    let d3: [f64; 3] = core::array::from_fn(|r| j[r][0] * p3 + j[r][2]);
    let dgu = [
        [d2[0] + d2[1], d3[0] + d3[1]],
        [d2[0] + d2[2], d3[0] + d3[2]],
    ];
    // inverse of g' = [[1 + P2, P3], [P2, 1 + P3]]
    let det = 1.0 + p2 + p3;
    let inv = [[(1.0 + p3) / det, -p3 / det], [-p2 / det, (1.0 + p2) / det]];
    let mut dg = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            dg[r][c] = dgu[r][0] * inv[0][c] + dgu[r][1] * inv[1][c];
        }
    }
    Ok(LimitCell {
        g: [f[0] + f[1], f[0] + f[2]],
        dg,
    })
}

fn limit_residual<M: ModelFunctions + ?Sized>(
    vw: &[Field; 2],
    old: &[Field; 2],
    h: f64,
    tau: f64,
    funcs: &M,
    closed: bool,
) -> Result<([Field; 2], Vec<LimitCell>)> {
    let n = vw[0].len();
    let cells = (0..n)
        .map(|j| limit_cell(funcs, vw[0][j], vw[1][j], closed))
        .collect::<Result<Vec<_>>>()?;
    let mut r: [Field; 2] = [vec![0.0; n], vec![0.0; n]];
    for i in 0..2 {
        let gi: Field = cells.iter().map(|c| c.g[i]).collect();
        laplacian_into(&gi, h, &mut r[i]);
        for j in 0..n {
            r[i][j] = vw[i][j] - old[i][j] - tau * r[i][j];
        }
    }
    Ok((r, cells))
}

fn norm2(r: &[Field; 2]) -> f64 {
    r.iter().flatten().fold(0.0f64, |m, x| {
        if x.is_nan() {
            f64::INFINITY
        } else {
            m.max(abs(*x))
        }
    })
}

fn limit_step<M: ModelFunctions + ?Sized>(
    old: &[Field; 2],
    grid: &Grid1D,
    p: &SchemeParams,
    funcs: &M,
    closed: bool,
) -> Result<[Field; 2]> {
    let n = grid.n();
    let h = grid.h();
    let s = p.tau / (h * h);
    let mut x = old.clone();
    let (mut r, mut cells) = limit_residual(&x, old, h, p.tau, funcs, closed)?;
    let mut norm = norm2(&r);
    for _ in 0..p.newton_max {
        if norm <= p.newton_tol {
            return Ok(x);
        }
        let mut a = BlockTridiagonal::<2>::zeros(n);
        for j in 0..n {
            let c = if j == 0 || j == n - 1 { 1.0 } else { 2.0 };
            for r_ in 0..2 {
                for k in 0..2 {
                    a.diag[j][r_][k] = c * s * cells[j].dg[r_][k];
                    if j > 0 {
                        a.lower[j][r_][k] = -s * cells[j - 1].dg[r_][k];
                    }
                    if j + 1 < n {
                        a.upper[j][r_][k] = -s * cells[j + 1].dg[r_][k];
                    }
                }
                a.diag[j][r_][r_] += 1.0;
            }
        }
        let mut delta: Vec<[f64; 2]> = (0..n).map(|j| [-r[0][j], -r[1][j]]).collect();
        a.solve(&mut delta)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let trial: [Field; 2] = core::array::from_fn(|i| {
                (0..n)
                    .map(|j| (x[i][j] + lambda * delta[j][i]).max(POSITIVITY_FLOOR))
                    .collect()
            });
            if let Ok((tr, tc)) = limit_residual(&trial, old, h, p.tau, funcs, closed) {
                let tn = norm2(&tr);
                if tn < norm {
                    x = trial;
                    r = tr;
                    cells = tc;
                    norm = tn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm <= p.newton_tol {
        return Ok(x);
    }
    Err(Error::Divergence {
        solver: "limit newton",
        iterations: p.newton_max,
        residual: norm,
        last_iterate: x.concat(),
    })
}

/// Implicit Euler for the reduced system, one Newton solve in `(v, w)` per
/// step. Only `tau`, `newton_tol` and `newton_max` of `p` are used.
pub fn solve_limit_system<M: ModelFunctions + ?Sized>(
    v_init: &[f64],
    w_init: &[f64],
    grid: &Grid1D,
    t_final: f64,
    p: &SchemeParams,
    funcs: &M,
    how: Reconstruction,
) -> Result<LimitTrajectory> {
    grid.check_len(v_init.len())?;
    grid.check_len(w_init.len())?;
    if v_init
        .iter()
        .chain(w_init)
        .any(|x| !(*x > 0.0 && x.is_finite()))
    {
        return Err(Error::invalid(
            "v_init/w_init",
            "must be strictly positive and finite",
        ));
    }
    if !(p.tau > 0.0 && p.tau.is_finite()) {
        return Err(Error::invalid("tau", "must be positive and finite"));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::invalid("t_final", "must be nonnegative and finite"));
    }
    let closed = use_closed_form(funcs, how)?;
    let steps = step_count(t_final, p.tau);
    let mut v = Vec::with_capacity(steps + 1);
    let mut w = Vec::with_capacity(steps + 1);
    let mut h0 = Vec::with_capacity(steps + 1);
    let entropy = |vv: &[f64], ww: &[f64]| -> Result<f64> {
        let u = reconstruct_fields(vv, ww, funcs, how)?;
        let dens: Field = (0..vv.len())
            .map(|j| h_point(funcs, [u[0][j], u[1][j], u[2][j]], 0.0))
            .collect();
        Ok(integrate(&dens, grid))
    };
    let mut cur = [v_init.to_vec(), w_init.to_vec()];
    h0.push(entropy(&cur[0], &cur[1])?);
    for k in 1..=steps {
        let next = limit_step(&cur, grid, p, funcs, closed).map_err(|e| Error::StepFailed {
            step: k,
            source: alloc::boxed::Box::new(e),
        })?;
        h0.push(entropy(&next[0], &next[1])?);
        let [cv, cw] = core::mem::replace(&mut cur, next);
        v.push(cv);
        w.push(cw);
    }
    let [cv, cw] = cur;
    v.push(cv);
    w.push(cw);
    Ok(LimitTrajectory {
        v,
        w,
        h0,
        tau: p.tau,
    })
}

/// Setup shared by every run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grid: Grid1D,
    pub t_final: f64,
    pub tau: f64,
    pub eta: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub u2_init: Field,
    pub u3_init: Field,
}

impl SweepConfig {
    /// `L = 1`, `N = 128`, `T = 0.5`, `tau = 1e-3`, `eta = 0`,
    /// `u2 = 1 + cos(pi x) / 2`, `u3 = 1 + sin^2(pi x) / 2`.
    pub fn reference() -> Self {
        let grid = Grid1D::new(128, 1.0).expect("valid grid");
        let pi = core::f64::consts::PI;
        SweepConfig {
            grid,
            t_final: 0.5,
            tau: 1e-3,
            eta: 0.0,
            newton_tol: 1e-10,
            newton_max: 50,
            u2_init: grid.sample(|x| 1.0 + 0.5 * libm::cos(pi * x)),
            u3_init: grid.sample(|x| {
                let s = libm::sin(pi * x);
                1.0 + 0.5 * s * s
            }),
        }
    }

    pub fn scheme(&self, eps: f64) -> SchemeParams {
        SchemeParams {
            tau: self.tau,
            eta: self.eta,
            eps,
            newton_tol: self.newton_tol,
            newton_max: self.newton_max,
            strict_tau: false,
        }
    }

    pub fn initial_state<M: ModelFunctions + ?Sized>(&self, funcs: &M) -> Result<State> {
        well_prepared_init(&self.u2_init, &self.u3_init, &self.grid, funcs)
    }
}

/// Norms for one `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    /// `tau sum_k h sum_j |q1(u1) - q2(u2) q3(u3)|`.
    pub defect_l1_qt: f64,
    /// `tau sum_k h sum_j |u1 + u2 - v^k|`.
    pub gap_v: f64,
    pub gap_w: f64,
    /// `defect_l1_qt / sqrt(eps)`.
    pub ratio: f64,
    /// `h^eta` at every time level of the full run.
    pub entropy_trace: Vec<f64>,
    /// Largest deviation of `int (u1 + u2)` from `int v^k` over the run,
    /// relative to `int v^0`.
    pub mass_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub eps: f64,
    pub outcome: Result<SweepRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by decreasing `eps`.
    pub entries: Vec<SweepEntry>,
    pub limit: LimitTrajectory,
}

impl SweepResult {
    pub fn rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.entries.iter().filter_map(|e| e.outcome.as_ref().ok())
    }
}

/// Checks an `eps` list and returns it sorted by decreasing value.
pub fn prepare_eps_list(eps: &[f64]) -> Result<Vec<f64>> {
    if eps.is_empty() {
        return Err(Error::invalid("epsilons", "at least one value is required"));
    }
    if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::invalid(
            "epsilons",
            "values must be positive and finite",
        ));
    }
    let mut sorted = eps.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("epsilons", "duplicate values"));
    }
    Ok(sorted)
}

/// Solves the reduced system from the well-prepared data of `cfg`.
pub fn solve_reference_limit<M: ModelFunctions + ?Sized>(
    cfg: &SweepConfig,
    funcs: &M,
) -> Result<LimitTrajectory> {
    let init = cfg.initial_state(funcs)?;
    let n = cfg.grid.n();
    let v: Field = (0..n).map(|j| init.u[0][j] + init.u[1][j]).collect();
    let w: Field = (0..n).map(|j| init.u[0][j] + init.u[2][j]).collect();
    solve_limit_system(
        &v,
        &w,
        &cfg.grid,
        cfg.t_final,
        &cfg.scheme(f64::INFINITY),
        funcs,
        Reconstruction::Auto,
    )
}

/// Full run at one `eps`, compared against a precomputed limit trajectory.
pub fn sweep_one<M: ModelFunctions + ?Sized>(
    cfg: &SweepConfig,
    eps: f64,
    funcs: &M,
    limit: &LimitTrajectory,
) -> Result<SweepRow> {
    let p = cfg.scheme(eps);
    let init = cfg.initial_state(funcs)?;
    let opts = RunOptions::new(cfg.t_final);
    let tr = run(&init, &cfg.grid, &p, funcs, &opts)?;
    if tr.states.len() != limit.v.len() {
        return Err(Error::LengthMismatch {
            expected: limit.v.len(),
            got: tr.states.len(),
        });
    }
    let grid = &cfg.grid;
    let h = grid.h();
    let mut defect = 0.0;
    let mut gap_v = 0.0;
    let mut gap_w = 0.0;
    let mut mass_gap = 0.0f64;
    let mass0 = integrate(&limit.v[0], grid);
    for (k, s) in tr.states.iter().enumerate() {
        let mut dk = 0.0;
        let mut gv = 0.0;
        let mut gw = 0.0;
        let mut m12 = 0.0;
        for j in 0..grid.n() {
            let c = s.at(j);
            dk += abs(funcs.q(0, c[0]) - funcs.q(1, c[1]) * funcs.q(2, c[2]));
            gv += abs(c[0] + c[1] - limit.v[k][j]);
            gw += abs(c[0] + c[2] - limit.w[k][j]);
            m12 += c[0] + c[1];
        }
        mass_gap = mass_gap.max(abs(h * m12 - integrate(&limit.v[k], grid)) / mass0);
        if k > 0 {
            defect += p.tau * h * dk;
            gap_v += p.tau * h * gv;
            gap_w += p.tau * h * gw;
        }
    }
    Ok(SweepRow {
        eps,
        defect_l1_qt: defect,
        gap_v,
        gap_w,
        ratio: defect / sqrt(eps),
        entropy_trace: tr.reports.iter().map(|r| r.h_eta).collect(),
        mass_gap,
    })
}

/// Runs the full system for every `eps` and the reduced system once. A
/// failing `eps` is recorded in its entry; the others still run.
pub fn eps_sweep<M: ModelFunctions + ?Sized>(
    cfg: &SweepConfig,
    eps: &[f64],
    funcs: &M,
) -> Result<SweepResult> {
    let list = prepare_eps_list(eps)?;
    let limit = solve_reference_limit(cfg, funcs)?;
    let entries = list
        .into_iter()
        .map(|e| SweepEntry {
            eps: e,
            outcome: sweep_one(cfg, e, funcs, &limit),
        })
        .collect();
    Ok(SweepResult { entries, limit })
}
