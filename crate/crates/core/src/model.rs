//! Nonlinearity bundles and numeric validation of their structural
//! assumptions.
//!
//! A bundle supplies the self-diffusion functions `f_i`, the cross-diffusion
//! functions `f12(s1, s2)` and `f21(s1, s2)`, the reaction functions `q_i`
//! and their derivatives. The diffusion map is
//!
//! ```text
//!   F1 = f1(u1) + f12(u1, u2),   F2 = f2(u2) + f21(u1, u2),   F3 = f3(u3)
//! ```
//!
//! and the reaction rate is `(q1(u1) - q2(u2) q3(u3)) / eps`.
//!
//! Species are indexed `0, 1, 2` throughout the crate.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::num::{abs, powf};
use crate::{quad, Error, Result};

/// Lower-bound exponent choice `1 - 1/sqrt(2)` for which the power-law family
/// is certified.
pub const CERTIFIED_DELTA: f64 = 1.0 - core::f64::consts::FRAC_1_SQRT_2;

/// Witness cap per check; the total failure count is kept separately.
const MAX_WITNESSES: usize = 8;

/// The evaluable structural data of the system.
///
/// Implementations must be pure. The default methods derive `q_i^{-1}` by
/// bracketing and the weak cross-diffusion quadratic inequality from the primitive
/// functions; closed-form families override them.
pub trait ModelFunctions {
    fn f(&self, i: usize, s: f64) -> f64;
    fn df(&self, i: usize, s: f64) -> f64;
    fn f12(&self, s1: f64, s2: f64) -> f64;
    fn f21(&self, s1: f64, s2: f64) -> f64;
    /// `[d1 f12, d2 f12, d1 f21, d2 f21]` at `(s1, s2)`.
    fn cross_partials(&self, s1: f64, s2: f64) -> [f64; 4];
    fn q(&self, i: usize, s: f64) -> f64;
    fn dq(&self, i: usize, s: f64) -> f64;
    /// Lower bound of every `f_i'`.
    fn kappa1(&self) -> f64;

    fn q_inv(&self, i: usize, y: f64) -> Result<f64> {
        quad::invert_increasing(|s| self.q(i, s), |s| self.dq(i, s), y)
    }

    /// `q_i(s) / q_i'(s)`, which stays finite at `s = 0` for the shipped
    /// families.
    fn q_over_dq(&self, i: usize, s: f64) -> f64 {
        self.q(i, s) / self.dq(i, s)
    }

    /// `int_1^s ln q_i(r) dr` in closed form, when one is known.
    fn entropy_primitive(&self, _i: usize, _s: f64) -> Option<f64> {
        None
    }

    /// Both sides `(L, R)` of the weak cross-diffusion inequality, multiplied
    /// through by `q1 q2 (1 + eta q1)(1 + eta q2) / (q1' q2')`. `None` where
    /// the quotient `q'/q` is singular and no limit form is known.
    fn weak_cross_sides(&self, s1: f64, s2: f64, eta: f64, delta: f64) -> Option<(f64, f64)> {
        if s1 <= 0.0 || s2 <= 0.0 {
            return None;
        }
        let [d1f12, d2f12, d1f21, d2f21] = self.cross_partials(s1, s2);
        let a = self.q_over_dq(0, s1) * (1.0 + eta * self.q(0, s1));
        let b = self.q_over_dq(1, s2) * (1.0 + eta * self.q(1, s2));
        let mixed = b * d2f12 + a * d1f21;
        let lhs = mixed * mixed / (a * b);
        let rhs = 2.0
            * (1.0 - delta)
            * (1.0 - delta)
            * (self.df(0, s1) + d1f12)
            * (self.df(1, s2) + d2f21);
        Some((lhs, rhs))
    }

    fn power_law(&self) -> Option<&PowerLawParams> {
        None
    }

    fn q_is_identity(&self) -> bool {
        false
    }

    fn f_is_identity(&self) -> bool {
        false
    }
}

/// Parameters of the power-law family
///
/// ```text
///   f_i(s) = alpha_i s + s^delta,   q_i(s) = s^beta,
///   f12(s1, s2) = alpha s1^gamma s2,   f21(s1, s2) = alpha s1 s2^gamma.
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Self-diffusion exponent.
    pub delta: f64,
    /// Reaction exponent.
    pub beta: f64,
    /// Cross-diffusion exponent.
    pub gamma: f64,
    /// Cross-diffusion strength.
    pub alpha: f64,
}

impl PowerLawParams {
    /// `(1, 1, 1, 5, 1, 1, 0.005)`: the smallest-exponent certified choice.
    pub const REFERENCE: PowerLawParams = PowerLawParams {
        alpha1: 1.0,
        alpha2: 1.0,
        alpha3: 1.0,
        delta: 5.0,
        beta: 1.0,
        gamma: 1.0,
        alpha: 0.005,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("delta", self.delta),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        for (name, v) in &fields[..3] {
            if *v <= 0.0 {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in &fields[3..6] {
            if *v < 1.0 {
                return Err(Error::invalid(
                    name,
                    format!("exponent must be >= 1, got {v}"),
                ));
            }
        }
        if self.alpha < 0.0 {
            return Err(Error::invalid(
                "alpha",
                format!("must be nonnegative, got {}", self.alpha),
            ));
        }
        Ok(())
    }

    fn alpha_i(&self, i: usize) -> f64 {
        match i {
            0 => self.alpha1,
            1 => self.alpha2,
            _ => self.alpha3,
        }
    }
}

/// The power-law bundle. Construct with [`build_power_law`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    params: PowerLawParams,
}

pub fn build_power_law(params: PowerLawParams) -> Result<PowerLaw> {
    params.validate()?;
    Ok(PowerLaw { params })
}

impl PowerLaw {
    pub fn params(&self) -> &PowerLawParams {
        &self.params
    }
}

impl ModelFunctions for PowerLaw {
    fn f(&self, i: usize, s: f64) -> f64 {
        self.params.alpha_i(i) * s + powf(s, self.params.delta)
    }

    fn df(&self, i: usize, s: f64) -> f64 {
        let p = &self.params;
        p.alpha_i(i) + p.delta * powf(s, p.delta - 1.0)
    }

    fn f12(&self, s1: f64, s2: f64) -> f64 {
        self.params.alpha * powf(s1, self.params.gamma) * s2
    }

    fn f21(&self, s1: f64, s2: f64) -> f64 {
        self.params.alpha * s1 * powf(s2, self.params.gamma)
    }

    fn cross_partials(&self, s1: f64, s2: f64) -> [f64; 4] {
        let PowerLawParams { alpha, gamma, .. } = self.params;
        [
            alpha * gamma * powf(s1, gamma - 1.0) * s2,
            alpha * powf(s1, gamma),
            alpha * powf(s2, gamma),
            alpha * s1 * gamma * powf(s2, gamma - 1.0),
        ]
    }

    fn q(&self, _i: usize, s: f64) -> f64 {
        powf(s, self.params.beta)
    }

    fn dq(&self, _i: usize, s: f64) -> f64 {
        self.params.beta * powf(s, self.params.beta - 1.0)
    }

    fn kappa1(&self) -> f64 {
        let p = &self.params;
        p.alpha1.min(p.alpha2).min(p.alpha3)
    }

    fn q_inv(&self, _i: usize, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::NonFinite("q inverse"));
        }
        if y <= 0.0 {
            return Ok(0.0);
        }
        Ok(if self.params.beta == 1.0 {
            y
        } else {
            powf(y, 1.0 / self.params.beta)
        })
    }

    fn q_over_dq(&self, _i: usize, s: f64) -> f64 {
        s / self.params.beta
    }

    fn entropy_primitive(&self, _i: usize, s: f64) -> Option<f64> {
        // beta * (s ln s - s + 1), equal to beta at s = 0
        Some(self.params.beta * (crate::num::xlogx(s) - s + 1.0))
    }

    fn weak_cross_sides(&self, s1: f64, s2: f64, eta: f64, delta: f64) -> Option<(f64, f64)> {
        // q'/q = beta/s cancels against the factor s_i of the cross partials.
        let PowerLawParams { alpha, gamma, .. } = self.params;
        let e1 = 1.0 + eta * self.q(0, s1);
        let e2 = 1.0 + eta * self.q(1, s2);
        let inner = powf(s1, gamma - 1.0) / e1 + powf(s2, gamma - 1.0) / e2;
        let lhs = s1 * s2 * e1 * e2 * alpha * alpha * inner * inner;
        let [d1f12, _, _, d2f21] = self.cross_partials(s1, s2);
        let rhs = 2.0
            * (1.0 - delta)
            * (1.0 - delta)
            * (self.df(0, s1) + d1f12)
            * (self.df(1, s2) + d2f21);
        Some((lhs, rhs))
    }

    fn power_law(&self) -> Option<&PowerLawParams> {
        Some(&self.params)
    }

    fn q_is_identity(&self) -> bool {
        self.params.beta == 1.0
    }
}

/// `f_i = q_i = identity` without cross-diffusion, the explicitly solvable
/// example whose reduced system has closed-form inversion and entropy flux.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Identity;

impl ModelFunctions for Identity {
    fn f(&self, _i: usize, s: f64) -> f64 {
        s
    }
    fn df(&self, _i: usize, _s: f64) -> f64 {
        1.0
    }
    fn f12(&self, _s1: f64, _s2: f64) -> f64 {
        0.0
    }
    fn f21(&self, _s1: f64, _s2: f64) -> f64 {
        0.0
    }
    fn cross_partials(&self, _s1: f64, _s2: f64) -> [f64; 4] {
        [0.0; 4]
    }
    fn q(&self, _i: usize, s: f64) -> f64 {
        s
    }
    fn dq(&self, _i: usize, _s: f64) -> f64 {
        1.0
    }
    fn kappa1(&self) -> f64 {
        1.0
    }
    fn q_inv(&self, _i: usize, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::NonFinite("q inverse"));
        }
        Ok(y.max(0.0))
    }
    fn q_over_dq(&self, _i: usize, s: f64) -> f64 {
        s
    }
    fn entropy_primitive(&self, _i: usize, s: f64) -> Option<f64> {
        Some(crate::num::xlogx(s) - s + 1.0)
    }
    fn weak_cross_sides(&self, _s1: f64, _s2: f64, _eta: f64, delta: f64) -> Option<(f64, f64)> {
        Some((0.0, 2.0 * (1.0 - delta) * (1.0 - delta)))
    }
    fn q_is_identity(&self) -> bool {
        true
    }
    fn f_is_identity(&self) -> bool {
        true
    }
}

type ScalarFn = Box<dyn Fn(usize, f64) -> f64 + Send + Sync>;
type PairFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A user-supplied bundle. Derivatives are taken on trust; call
/// [`CustomModel::check_derivatives`] to cross-check them.
pub struct CustomModel {
    pub f: ScalarFn,
    pub df: ScalarFn,
    pub f12: PairFn,
    pub f21: PairFn,
    pub cross_partials: Box<dyn Fn(f64, f64) -> [f64; 4] + Send + Sync>,
    pub q: ScalarFn,
    pub dq: ScalarFn,
    /// Closed-form `q_i^{-1}`; bracketing is used when absent.
    pub q_inv: Option<ScalarFn>,
    pub kappa1: f64,
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel")
            .field("kappa1", &self.kappa1)
            .field("closed_form_q_inv", &self.q_inv.is_some())
            .finish_non_exhaustive()
    }
}

impl ModelFunctions for CustomModel {
    fn f(&self, i: usize, s: f64) -> f64 {
        (self.f)(i, s)
    }
    fn df(&self, i: usize, s: f64) -> f64 {
        (self.df)(i, s)
    }
    fn f12(&self, s1: f64, s2: f64) -> f64 {
        (self.f12)(s1, s2)
    }
    fn f21(&self, s1: f64, s2: f64) -> f64 {
        (self.f21)(s1, s2)
    }
    fn cross_partials(&self, s1: f64, s2: f64) -> [f64; 4] {
        (self.cross_partials)(s1, s2)
    }
    fn q(&self, i: usize, s: f64) -> f64 {
        (self.q)(i, s)
    }
    fn dq(&self, i: usize, s: f64) -> f64 {
        (self.dq)(i, s)
    }
    fn kappa1(&self) -> f64 {
        self.kappa1
    }
    fn q_inv(&self, i: usize, y: f64) -> Result<f64> {
        match &self.q_inv {
            Some(inv) => Ok(inv(i, y)),
            None => quad::invert_increasing(|s| self.q(i, s), |s| self.dq(i, s), y),
        }
    }
}

const FD_REL_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-4;

impl CustomModel {
    /// Compares every supplied derivative against a central difference at
    /// relative step `1e-6` on the given positive samples.
    pub fn check_derivatives(&self, samples: &[f64]) -> AssumptionReport {
        let mut check = Check::new(
            "derivatives",
            "|supplied - central difference| <= 1e-4 (1 + |fd|)",
        );
        let fd = |g: &dyn Fn(f64) -> f64, s: f64| {
            let h = FD_REL_STEP * s.max(1e-3);
            (g(s + h) - g(s - h)) / (2.0 * h)
        };
        for &s in samples.iter().filter(|s| **s > 0.0) {
            for i in 0..3 {
                let pairs = [
                    (self.df(i, s), fd(&|x| self.f(i, x), s)),
                    (self.dq(i, s), fd(&|x| self.q(i, x), s)),
                ];
                for (supplied, approx) in pairs {
                    check.test(Some([s, f64::NAN, f64::NAN]), supplied, approx, |a, b| {
                        abs(a - b) <= FD_REL_TOL * (1.0 + abs(b))
                    });
                }
            }
            for &t in samples.iter().filter(|t| **t > 0.0) {
                let p = self.cross_partials(s, t);
                let approx = [
                    fd(&|x| self.f12(x, t), s),
                    fd(&|x| self.f12(s, x), t),
                    fd(&|x| self.f21(x, t), s),
                    fd(&|x| self.f21(s, x), t),
                ];
                for k in 0..4 {
                    check.test(Some([s, t, f64::NAN]), p[k], approx[k], |a, b| {
                        abs(a - b) <= FD_REL_TOL * (1.0 + abs(b))
                    });
                }
            }
        }
        AssumptionReport {
            checks: alloc::vec![check],
            delta: None,
        }
    }
}

/// A failing evaluation: the sample point `(s1, s2, eta)` (unused
/// coordinates are NaN, parameter checks have no point) and both sides of the
/// violated inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub point: Option<[f64; 3]>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub inequality: &'static str,
    pub passed: bool,
    /// Number of violating evaluations; at most eight are kept as witnesses.
    pub failures: usize,
    pub witnesses: Vec<Witness>,
    /// Free-form detail such as a sampled maximum.
    pub note: Option<String>,
}

impl Check {
    fn new(name: &'static str, inequality: &'static str) -> Self {
        Check {
            name,
            inequality,
            passed: true,
            failures: 0,
            witnesses: Vec::new(),
            note: None,
        }
    }

    fn fail(&mut self, point: Option<[f64; 3]>, lhs: f64, rhs: f64) {
        self.passed = false;
        self.failures += 1;
        if self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(Witness { point, lhs, rhs });
        }
    }

    /// Records a failure unless both sides are finite and `holds(lhs, rhs)`.
    fn test(
        &mut self,
        point: Option<[f64; 3]>,
        lhs: f64,
        rhs: f64,
        holds: impl Fn(f64, f64) -> bool,
    ) {
        if !(lhs.is_finite() && rhs.is_finite() && holds(lhs, rhs)) {
            self.fail(point, lhs, rhs);
        }
    }
}

/// Outcome of a set of assumption checks; printable as a plain-text
/// certificate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssumptionReport {
    pub checks: Vec<Check>,
    /// The `delta in (0, 1)` used by the weak cross-diffusion check.
    pub delta: Option<f64>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn merge(&mut self, other: AssumptionReport) {
        self.checks.extend(other.checks);
        if self.delta.is_none() {
            self.delta = other.delta;
        }
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(d) = self.delta {
            writeln!(f, "weak cross-diffusion margin delta = {d:.17e}")?;
        }
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "[{status}] {}: {}", c.name, c.inequality)?;
            if let Some(note) = &c.note {
                writeln!(f, "    {note}")?;
            }
            if c.failures > 0 {
                writeln!(f, "    {} violation(s)", c.failures)?;
            }
            for w in &c.witnesses {
                match w.point {
                    Some([s1, s2, eta]) => {
                        write!(f, "    at (s1, s2, eta) = ({s1:e}, {s2:e}, {eta:e}): ")?
                    }
                    None => write!(f, "    ")?,
                }
                writeln!(f, "lhs = {:.17e}, rhs = {:.17e}", w.lhs, w.rhs)?;
            }
        }
        Ok(())
    }
}

/// Evaluates the four sufficient parameter conditions under which the
/// power-law family satisfies all structural assumptions.
pub fn check_power_law_conditions(params: &PowerLawParams) -> AssumptionReport {
    let p = params;
    let mut checks = Vec::with_capacity(4);

    let mut c = Check::new("beta", "beta >= 1");
    c.test(None, p.beta, 1.0, |l, r| l >= r);
    checks.push(c);

    let mut c = Check::new("gamma", "gamma >= 1");
    c.test(None, p.gamma, 1.0, |l, r| l >= r);
    checks.push(c);

    let mut c = Check::new("delta", "delta >= 1 + 4 max{beta, gamma - 1}");
    c.test(
        None,
        p.delta,
        1.0 + 4.0 * p.beta.max(p.gamma - 1.0),
        |l, r| l >= r,
    );
    checks.push(c);

    let mut c = Check::new("alpha", "1024 alpha^2 <= min{alpha1, alpha2, delta}");
    c.test(
        None,
        1024.0 * p.alpha * p.alpha,
        p.alpha1.min(p.alpha2).min(p.delta),
        |l, r| l <= r,
    );
    checks.push(c);

    AssumptionReport {
        checks,
        delta: None,
    }
}

/// Log-spaced `64 x 64` grid over `[1e-2, 10]^2` plus the axis points
/// `(0, 0)`, `(0, 1e-2)`, `(0, 10)`, `(1e-2, 0)`, `(10, 0)`.
pub fn default_sample_grid() -> Vec<(f64, f64)> {
    let axis = log_space(1e-2, 10.0, 64);
    let mut grid = Vec::with_capacity(64 * 64 + 5);
    for &a in &axis {
        for &b in &axis {
            grid.push((a, b));
        }
    }
    grid.extend([
        (0.0, 0.0),
        (0.0, 1e-2),
        (0.0, 10.0),
        (1e-2, 0.0),
        (10.0, 0.0),
    ]);
    grid
}

pub(crate) fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (crate::num::ln(lo), crate::num::ln(hi));
    (0..n)
        .map(|k| crate::num::exp(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

/// Checks the weak cross-diffusion inequality and its determinant
/// consequence on `sample_grid` for `eta in {0, eta_max/2, eta_max}`.
///
/// Points where the inequality is singular and the bundle has no limit form
/// (generic bundles on the axes) are skipped and counted in the note.
pub fn check_weak_cross_numeric<M: ModelFunctions + ?Sized>(
    funcs: &M,
    eta_max: f64,
    delta_cand: f64,
    sample_grid: &[(f64, f64)],
) -> Result<AssumptionReport> {
    if !(eta_max > 0.0 && eta_max.is_finite()) {
        return Err(Error::invalid("eta_max", "must be positive and finite"));
    }
    if !(delta_cand > 0.0 && delta_cand < 1.0) {
        return Err(Error::invalid("delta", "must lie in (0, 1)"));
    }
    let mut a5 = Check::new(
        "weak_cross",
        "(q1' d2f12 / (q1 (1 + eta q1)) + q2' d1f21 / (q2 (1 + eta q2)))^2 <= 2 (1 - delta)^2 q1' q2' (f1' + d1f12)(f2' + d2f21) / (q1 q2 (1 + eta q1)(1 + eta q2))",
    );
    let mut det = Check::new("det", "d2f12 d1f21 < (f1' + d1f12)(f2' + d2f21)");
    let mut skipped = 0usize;
    let mut worst = 0.0f64;

    for &(s1, s2) in sample_grid {
        if !(s1.is_finite() && s2.is_finite()) || s1 < 0.0 || s2 < 0.0 {
            a5.fail(Some([s1, s2, f64::NAN]), f64::NAN, f64::NAN);
            continue;
        }
        for eta in [0.0, 0.5 * eta_max, eta_max] {
            match funcs.weak_cross_sides(s1, s2, eta, delta_cand) {
                Some((lhs, rhs)) => {
                    if rhs > 0.0 {
                        worst = worst.max(lhs / rhs);
                    }
                    a5.test(Some([s1, s2, eta]), lhs, rhs, |l, r| l <= r);
                }
                None => skipped += 1,
            }
        }
        let [d1f12, d2f12, d1f21, d2f21] = funcs.cross_partials(s1, s2);
        let lhs = d2f12 * d1f21;
        let rhs = (funcs.df(0, s1) + d1f12) * (funcs.df(1, s2) + d2f21);
        det.test(Some([s1, s2, f64::NAN]), lhs, rhs, |l, r| l < r);
    }
    let mut note = format!("max lhs/rhs over samples = {worst:.6e}");
    if skipped > 0 {
        note.push_str(&format!("; {skipped} singular evaluation(s) skipped"));
    }
    a5.note = Some(note);

    Ok(AssumptionReport {
        checks: alloc::vec![a5, det],
        delta: Some(delta_cand),
    })
}

/// Sampled checks of the diffusion and reaction structure: `f_i(0) = 0`,
/// `f_i' >= kappa1`, `f_i(s) >= kappa1 s`, the factorization and
/// monotonicity of the cross terms, `q_i(0) = 0`, `q_i' > 0`, `q_i` reaching
/// 1, and the round trip `q_i^{-1}(q_i(s)) = s` on `[0, 100]`.
pub fn check_structure<M: ModelFunctions + ?Sized>(funcs: &M) -> AssumptionReport {
    let k1 = funcs.kappa1();
    let mut samples = log_space(1e-3, 100.0, 41);
    samples.insert(0, 0.0);

    let mut a1 = Check::new(
        "diffusion",
        "f_i(0) = 0, f_i'(s) >= kappa1 > 0, f_i(s) >= kappa1 s",
    );
    let mut c = Check::new("kappa1", "kappa1 > 0");
    c.test(None, k1, 0.0, |l, r| l > r);
    let kappa_check = c;
    for i in 0..3 {
        a1.test(
            Some([0.0, f64::NAN, f64::NAN]),
            abs(funcs.f(i, 0.0)),
            0.0,
            |l, r| l <= r,
        );
        for &s in &samples {
            a1.test(Some([s, f64::NAN, f64::NAN]), funcs.df(i, s), k1, |l, r| {
                l >= r
            });
            a1.test(
                Some([s, f64::NAN, f64::NAN]),
                funcs.f(i, s),
                k1 * s,
                |l, r| l >= r * (1.0 - 1e-14),
            );
        }
    }

    let mut a2 = Check::new(
        "cross_diffusion",
        "f12(0, s2) = 0, f21(s1, 0) = 0, all cross partials >= 0",
    );
    for &s in &samples {
        a2.test(
            Some([0.0, s, f64::NAN]),
            abs(funcs.f12(0.0, s)),
            0.0,
            |l, r| l <= r,
        );
        a2.test(
            Some([s, 0.0, f64::NAN]),
            abs(funcs.f21(s, 0.0)),
            0.0,
            |l, r| l <= r,
        );
        for &t in &samples {
            for d in funcs.cross_partials(s, t) {
                a2.test(Some([s, t, f64::NAN]), d, 0.0, |l, r| l >= r);
            }
        }
    }

    let mut a3 = Check::new(
        "reaction",
        "q_i(0) = 0, q_i'(s) > 0 for s > 0, q_i(s0) >= 1 for some s0",
    );
    let mut inv = Check::new("q_inverse", "|q_i^-1(q_i(s)) - s| <= 1e-12 s on [0, 100]");
    for i in 0..3 {
        a3.test(
            Some([0.0, f64::NAN, f64::NAN]),
            abs(funcs.q(i, 0.0)),
            0.0,
            |l, r| l <= r,
        );
        let mut reaches_one = false;
        for &s in samples.iter().filter(|s| **s > 0.0) {
            a3.test(
                Some([s, f64::NAN, f64::NAN]),
                funcs.dq(i, s),
                0.0,
                |l, r| l > r,
            );
            reaches_one |= funcs.q(i, s) >= 1.0;
        }
        if !reaches_one {
            a3.fail(None, funcs.q(i, 100.0), 1.0);
        }
        for &s in &samples {
            let back = funcs.q_inv(i, funcs.q(i, s)).unwrap_or(f64::NAN);
            inv.test(
                Some([s, f64::NAN, f64::NAN]),
                abs(back - s),
                1e-12 * s,
                |l, r| l <= r.max(1e-300),
            );
        }
    }

    AssumptionReport {
        checks: alloc::vec![kappa_check, a1, a2, a3, inv],
        delta: None,
    }
}

/// Sampled maximum of the growth ratio
/// `q_i(s_i)(1 + q_i(s_i)) / (q_i'(s_i) f_i'(s_i) (F_i(s) s_i + 1))`
/// over `[0, 1e3]^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthRatio {
    pub max: f64,
    pub argmax: [f64; 3],
    /// Largest ratio among samples on the outer shell `max_i s_i = 1e3`.
    pub shell_max: f64,
}

impl GrowthRatio {
    /// The ratio does not grow toward the edge of the sampled range.
    pub fn decays(&self) -> bool {
        self.shell_max <= self.max
    }
}

pub fn growth_ratio<M: ModelFunctions + ?Sized>(funcs: &M) -> GrowthRatio {
    let mut axis = log_space(1e-3, 1e3, 19);
    axis.insert(0, 0.0);
    let top = *axis.last().unwrap();
    let mut out = GrowthRatio {
        max: 0.0,
        argmax: [0.0; 3],
        shell_max: 0.0,
    };
    for &a in &axis {
        for &b in &axis {
            for &c in &axis {
                let s = [a, b, c];
                let fmap = crate::maps::f_components(funcs, s);
                for i in 0..3 {
                    let qi = funcs.q(i, s[i]);
                    let r = funcs.q_over_dq(i, s[i]) * (1.0 + qi)
                        / (funcs.df(i, s[i]) * (fmap[i] * s[i] + 1.0));
                    let r = if r.is_finite() { r } else { f64::INFINITY };
                    if r > out.max {
                        out.max = r;
                        out.argmax = s;
                    }
                    if (a == top || b == top || c == top) && r > out.shell_max {
                        out.shell_max = r;
                    }
                }
            }
        }
    }
    out
}

/// Full numeric certificate: structure checks, the growth ratio (advisory,
/// fails only when non-finite) and the weak cross-diffusion grid test.
pub fn check_all<M: ModelFunctions + ?Sized>(
    funcs: &M,
    eta_max: f64,
    delta_cand: f64,
    sample_grid: &[(f64, f64)],
) -> Result<AssumptionReport> {
    let mut report = check_structure(funcs);
    let growth = growth_ratio(funcs);
    let mut a4 = Check::new(
        "growth",
        "q_i (1 + q_i) / (q_i' f_i' (F_i s_i + 1)) bounded on sampled [0, 1e3]^3",
    );
    if !growth.max.is_finite() {
        a4.fail(Some(growth.argmax), growth.max, f64::INFINITY);
    }
    a4.note = Some(format!(
        "sampled max = {:.6e} at ({:e}, {:e}, {:e}); outer-shell max = {:.6e} ({}); the limit at infinity is not certified",
        growth.max,
        growth.argmax[0],
        growth.argmax[1],
        growth.argmax[2],
        growth.shell_max,
        if growth.decays() { "not increasing" } else { "increasing" }
    ));
    report.checks.push(a4);
    report.merge(check_weak_cross_numeric(
        funcs,
        eta_max,
        delta_cand,
        sample_grid,
    )?);
    Ok(report)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> PowerLaw {
        build_power_law(PowerLawParams::REFERENCE).unwrap()
    }

    #[test]
    fn power_law_hand_values() {
        let m = reference();
        assert_relative_eq!(m.f(0, 2.0), 34.0, epsilon = 1e-12);
        assert_relative_eq!(m.f12(2.0, 3.0), 0.03, epsilon = 1e-15);
        for i in 0..3 {
            assert_eq!(m.f(i, 0.0), 0.0);
            assert_eq!(m.q(i, 0.0), 0.0);
        }
        assert_eq!(m.kappa1(), 1.0);
    }

    #[test]
    fn power_law_rejects_bad_params() {
        let mut p = PowerLawParams::REFERENCE;
        p.alpha1 = -1.0;
        assert!(matches!(
            build_power_law(p),
            Err(Error::InvalidParameter { name: "alpha1", .. })
        ));
        let mut p = PowerLawParams::REFERENCE;
        p.beta = f64::NAN;
        assert!(build_power_law(p).is_err());
        let mut p = PowerLawParams::REFERENCE;
        p.gamma = 0.5;
        assert!(build_power_law(p).is_err());
        let mut p = PowerLawParams::REFERENCE;
        p.alpha = -0.1;
        assert!(build_power_law(p).is_err());
    }

    #[test]
    fn power_law_q_inverse_round_trip() {
        let mut p = PowerLawParams::REFERENCE;
        p.beta = 2.5;
        p.delta = 11.0;
        let m = build_power_law(p).unwrap();
        for k in 0..=100 {
            let s = k as f64;
            let back = m.q_inv(1, m.q(1, s)).unwrap();
            assert!((back - s).abs() <= 1e-12 * s.max(1e-300), "{s} -> {back}");
        }
    }

    #[test]
    fn power_law_conditions_reference_passes() {
        let r = check_power_law_conditions(&PowerLawParams::REFERENCE);
        assert!(r.passed(), "{r}");
        assert!(r.checks.iter().all(|c| c.witnesses.is_empty()));
    }

    #[test]
    fn power_law_conditions_alpha_violation() {
        let mut p = PowerLawParams::REFERENCE;
        p.alpha = 0.1;
        let r = check_power_law_conditions(&p);
        assert!(!r.passed());
        let w = r.check("alpha").unwrap().witnesses[0];
        assert_relative_eq!(w.lhs, 10.24, epsilon = 1e-12);
        assert_relative_eq!(w.rhs, 1.0);
    }

    #[test]
    fn power_law_conditions_delta_violation() {
        let mut p = PowerLawParams::REFERENCE;
        p.delta = 4.0;
        let r = check_power_law_conditions(&p);
        let c = r.check("delta").unwrap();
        assert!(!c.passed);
        assert_eq!((c.witnesses[0].lhs, c.witnesses[0].rhs), (4.0, 5.0));
        assert!(r.check("alpha").unwrap().passed);
    }

    #[test]
    fn a5_certified_params_pass() {
        let r =
            check_weak_cross_numeric(&reference(), 1.0, CERTIFIED_DELTA, &default_sample_grid())
                .unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.delta, Some(CERTIFIED_DELTA));
    }

    #[test]
    fn a5_without_cross_diffusion_passes_any_delta() {
        let mut p = PowerLawParams::REFERENCE;
        p.alpha = 0.0;
        let m = build_power_law(p).unwrap();
        for d in [0.01, 0.5, 0.99] {
            let r = check_weak_cross_numeric(&m, 1.0, d, &default_sample_grid()).unwrap();
            assert!(r.passed());
        }
    }

    #[test]
    fn a5_strong_cross_diffusion_fails_with_witness() {
        let p = PowerLawParams {
            alpha1: 0.01,
            alpha2: 0.01,
            alpha3: 1.0,
            delta: 2.0,
            beta: 1.0,
            gamma: 1.0,
            alpha: 5.0,
        };
        let m = build_power_law(p).unwrap();
        let r = check_weak_cross_numeric(&m, 1.0, CERTIFIED_DELTA, &default_sample_grid()).unwrap();
        let c = r.check("weak_cross").unwrap();
        assert!(!c.passed);
        let w = c.witnesses[0];
        assert!(w.point.is_some() && w.lhs > w.rhs);
        let text = alloc::format!("{r}");
        assert!(text.contains("[FAIL] weak_cross"));
    }

    #[test]
    fn a5_rejects_bad_candidates() {
        assert!(check_weak_cross_numeric(&reference(), 0.0, 0.3, &[(1.0, 1.0)]).is_err());
        assert!(check_weak_cross_numeric(&reference(), 1.0, 1.0, &[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn a5_limit_form_matches_generic_form_inside() {
        let m = reference();
        let custom = custom_from(m);
        for &(s1, s2) in &[(0.3, 2.0), (1.0, 1.0), (7.0, 0.05)] {
            for eta in [0.0, 0.5, 1.0] {
                let (l1, r1) = m.weak_cross_sides(s1, s2, eta, 0.2).unwrap();
                let (l2, r2) = custom.weak_cross_sides(s1, s2, eta, 0.2).unwrap();
                assert_relative_eq!(l1, l2, max_relative = 1e-12);
                assert_relative_eq!(r1, r2, max_relative = 1e-12);
            }
        }
        assert!(custom.weak_cross_sides(0.0, 1.0, 0.0, 0.2).is_none());
    }

    #[test]
    fn nonfinite_grid_point_is_reported() {
        let r = check_weak_cross_numeric(&reference(), 1.0, 0.3, &[(f64::NAN, 1.0)]).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn f_dominates_kappa_linear() {
        let m = reference();
        for k in 0..200 {
            let s = k as f64 * 0.05;
            for i in 0..3 {
                assert!(m.f(i, s) >= m.kappa1() * s);
            }
        }
    }

    #[test]
    fn structure_checks_pass_for_shipped_families() {
        assert!(check_structure(&reference()).passed());
        assert!(check_structure(&Identity).passed());
        let mut p = PowerLawParams::REFERENCE;
        p.beta = 2.0;
        p.delta = 9.0;
        assert!(check_structure(&build_power_law(p).unwrap()).passed());
    }

    #[test]
    fn growth_ratio_is_finite() {
        let g = growth_ratio(&reference());
        assert!(g.max.is_finite() && g.max > 0.0);
        assert!(g.decays());
        let full = check_all(&reference(), 1.0, CERTIFIED_DELTA, &default_sample_grid()).unwrap();
        assert!(full.passed(), "{full}");
    }

    pub(crate) fn custom_from(m: PowerLaw) -> CustomModel {
        CustomModel {
            f: Box::new(move |i, s| m.f(i, s)),
            df: Box::new(move |i, s| m.df(i, s)),
            f12: Box::new(move |a, b| m.f12(a, b)),
            f21: Box::new(move |a, b| m.f21(a, b)),
            cross_partials: Box::new(move |a, b| m.cross_partials(a, b)),
            q: Box::new(move |i, s| m.q(i, s)),
            dq: Box::new(move |i, s| m.dq(i, s)),
            q_inv: None,
            kappa1: m.kappa1(),
        }
    }

    #[test]
    fn custom_derivative_cross_check() {
        let good = custom_from(reference());
        let samples = [0.1, 0.5, 1.0, 2.0];
        assert!(good.check_derivatives(&samples).passed());
        let mut bad = custom_from(reference());
        bad.dq = Box::new(|_, _| 2.0);
        let r = bad.check_derivatives(&samples);
        assert!(!r.passed());
        assert!(r.checks[0].failures >= samples.len());
        // bracketing inverse agrees with the closed form
        assert_relative_eq!(good.q_inv(0, 3.7).unwrap(), 3.7, epsilon = 1e-13);
    }
}
