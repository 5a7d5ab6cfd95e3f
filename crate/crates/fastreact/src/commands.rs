use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fastreact_core::entropy::duality_monitor;
use fastreact_core::fastlimit::{
    prepare_eps_list, solve_limit_system, solve_reference_limit, sweep_one, Reconstruction,
    SweepRow,
};
use fastreact_core::maps::{
    closed_form_inverse, f_eval, f_inverse, g_eval, g_inverse, Pair, Triple,
};
use fastreact_core::model::{
    check_all, check_power_law_conditions, default_sample_grid, AssumptionReport, CERTIFIED_DELTA,
};
use fastreact_core::stepper::{run, RunOptions};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::config::Setup;
use crate::error::CliError;
use crate::output;

/// Largest accepted round-trip or oracle error in `check`.
pub const ROUND_TRIP_TOL: f64 = 1e-10;
const ROUND_TRIP_SAMPLES: usize = 100;

fn out_dir(setup: &Setup, out: Option<&Path>) -> PathBuf {
    out.map_or_else(|| setup.output.dir.clone(), Path::to_path_buf)
}

/// Full run; writes `fields.csv`, `entropy.csv` and, on request,
/// `duality.csv`. Returns the files written.
pub fn simulate(setup: &Setup, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let dir = out_dir(setup, out);
    let o = &setup.output;
    let opts = RunOptions {
        reports: o.entropy,
        ..RunOptions::new(setup.t_final)
    };
    let tr = run(
        &setup.init,
        &setup.grid,
        &setup.scheme,
        &*setup.model,
        &opts,
    )?;
    let mut written = Vec::new();
    if o.fields {
        written.push(output::write_fields(
            &dir,
            &tr.states,
            &setup.grid,
            o.snapshot_stride,
        )?);
    }
    if o.entropy {
        written.push(output::write_entropy(&dir, &tr.reports)?);
    }
    if o.duality {
        let d = duality_monitor(&tr.states, &setup.grid, setup.scheme.tau, &*setup.model)?;
        println!(
            "duality: A = {:.16e}, B = {:.16e}, A/(1+B) = {:.16e}, max residual = {:.3e}",
            d.a, d.b, d.ratio, d.max_residual
        );
        written.push(output::write_duality(&dir, &d, setup.scheme.tau)?);
    }
    println!(
        "simulated {} steps to t = {} (min u = {:.6e}, {} step halvings)",
        tr.states.len() - 1,
        tr.states.last().map_or(0.0, |s| s.t),
        tr.min_u,
        tr.halvings
    );
    Ok(written)
}

/// Runs the full system for every `eps` against one reduced-system solve
/// and writes `sweep.csv`. Runs are spread over `threads` workers; rows are
/// merged in order of decreasing `eps` whatever the thread count. A failed
/// run is reported after the successful rows are written.
pub fn sweep(
    setup: &Setup,
    eps: &[f64],
    threads: usize,
    out: Option<&Path>,
) -> Result<Vec<SweepRow>, CliError> {
    if !setup.well_prepared {
        return Err(CliError::config(
            "init.well_prepared",
            "the sweep compares well-prepared runs",
        ));
    }
    let list = prepare_eps_list(eps).map_err(|e| CliError::from_core("sweep", e))?;
    let cfg = setup.sweep_config();
    let model = &*setup.model;
    let limit = solve_reference_limit(&cfg, model)?;
    let threads = threads.clamp(1, list.len());
    let mut results: Vec<Option<fastreact_core::Result<SweepRow>>> = vec![None; list.len()];
    if threads == 1 {
        for (slot, e) in results.iter_mut().zip(&list) {
            *slot = Some(sweep_one(&cfg, *e, model, &limit));
        }
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let (cfg, limit, list) = (&cfg, &limit, &list);
                    s.spawn(move || {
                        (t..list.len())
                            .step_by(threads)
                            .map(|i| (i, sweep_one(cfg, list[i], model, limit)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("sweep worker panicked") {
                    results[i] = Some(r);
                }
            }
        });
    }
    let mut rows = Vec::new();
    let mut first_err = None;
    for (e, r) in list.iter().zip(results) {
        match r.expect("every eps is assigned") {
            Ok(row) => {
                println!(
                    "eps = {:.3e}: defect_L1_QT = {:.6e}, gap_v = {:.6e}, gap_w = {:.6e}, ratio = {:.6e}",
                    row.eps, row.defect_l1_qt, row.gap_v, row.gap_w, row.ratio
                );
                rows.push(row);
            }
            Err(err) => {
                eprintln!("eps = {e:e}: {err}");
                first_err.get_or_insert(err);
            }
        }
    }
    output::write_sweep(&out_dir(setup, out), &rows)?;
    match first_err {
        Some(e) => Err(CliError::Solver(e)),
        None => Ok(rows),
    }
}

/// Solves the reduced system from `v = u1 + u2`, `w = u1 + u3` of the
/// configured initial data; writes `limit.csv` and `limit_entropy.csv`.
pub fn limit(setup: &Setup, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let u = &setup.init.u;
    let v: Vec<f64> = u[0].iter().zip(&u[1]).map(|(a, b)| a + b).collect();
    let w: Vec<f64> = u[0].iter().zip(&u[2]).map(|(a, b)| a + b).collect();
    let model = &*setup.model;
    let lim = solve_limit_system(
        &v,
        &w,
        &setup.grid,
        setup.t_final,
        &setup.scheme,
        model,
        Reconstruction::Auto,
    )?;
    let files = output::write_limit(
        &out_dir(setup, out),
        &lim,
        &setup.grid,
        setup.output.snapshot_stride,
        model,
    )?;
    println!(
        "limit system: {} steps, h0 from {:.10e} to {:.10e}",
        lim.steps(),
        lim.h0[0],
        lim.h0.last().copied().unwrap_or(f64::NAN)
    );
    Ok(files.into())
}

/// Outcome of [`check`].
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub report: AssumptionReport,
    pub f_round_trip: f64,
    pub g_round_trip: f64,
    /// Newton against closed-form inversion, identity preset only.
    pub closed_form_gap: Option<f64>,
    pub passed: bool,
    /// The printed certificate, also written to `certificate.txt`.
    pub text: String,
}

/// Assumption certificate plus randomized inversion round trips.
pub fn check(setup: &Setup, seed: u64, out: Option<&Path>) -> Result<CheckOutcome, CliError> {
    let model = &*setup.model;
    let eta_max = setup.scheme.eta.max(1.0);
    let mut report = match &setup.params {
        Some(p) => check_power_law_conditions(p),
        None => AssumptionReport::default(),
    };
    report.merge(check_all(
        model,
        eta_max,
        CERTIFIED_DELTA,
        &default_sample_grid(),
    )?);

    let mut rng = SmallRng::seed_from_u64(seed);
    let (mut f_err, mut g_err, mut c_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..ROUND_TRIP_SAMPLES {
        let u: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..10.0));
        let back = f_inverse(f_eval(Triple(u), model)?, model, 1e-14)?;
        f_err = (0..3).fold(f_err, |m, i| m.max((back.0[i] - u[i]).abs()));
        let (u2, u3) = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        let (a, b) = g_inverse(g_eval(u2, u3, model)?, model, 1e-12)?;
        g_err = g_err.max((a - u2).abs()).max((b - u3).abs());
        if setup.params.is_none() {
            let p = Pair {
                v: rng.gen_range(0.0..10.0),
                w: rng.gen_range(0.0..10.0),
            };
            let (n2, n3) = g_inverse(p, model, 1e-12)?;
            let c = closed_form_inverse(p)?;
            c_err = c_err.max((n2 - c.u2()).abs()).max((n3 - c.u3()).abs());
        }
    }
    let closed_form_gap = setup.params.is_none().then_some(c_err);
    let trips_ok = f_err <= ROUND_TRIP_TOL && g_err <= ROUND_TRIP_TOL && c_err <= ROUND_TRIP_TOL;
    let passed = report.passed() && trips_ok;

    let mut text = report.to_string();
    let _ = writeln!(
        text,
        "F round trip max error ({ROUND_TRIP_SAMPLES} samples, seed {seed}): {f_err:.3e}"
    );
    let _ = writeln!(text, "g round trip max error: {g_err:.3e}");
    if let Some(c) = closed_form_gap {
        let _ = writeln!(text, "g inverse, Newton vs closed form max error: {c:.3e}");
    }
    let _ = writeln!(text, "overall: {}", if passed { "PASS" } else { "FAIL" });
    print!("{text}");

    let dir = out_dir(setup, out);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let path = dir.join("certificate.txt");
    std::fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;

    let outcome = CheckOutcome {
        report,
        f_round_trip: f_err,
        g_round_trip: g_err,
        closed_form_gap,
        passed,
        text,
    };
    if passed {
        Ok(outcome)
    } else {
        Err(CliError::CheckFailed("one or more checks failed".into()))
    }
}
