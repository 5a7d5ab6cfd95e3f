//! CSV writers. Floats are written with 17 significant digits so that a
//! file round-trips to the same `f64` values.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use fastreact_core::entropy::{DualityReport, EntropyReport};
use fastreact_core::fastlimit::{reconstruct_fields, LimitTrajectory, Reconstruction, SweepRow};
use fastreact_core::{Grid1D, ModelFunctions, State};

use crate::error::CliError;

pub const FIELDS_HEADER: [&str; 5] = ["t", "x", "u1", "u2", "u3"];
pub const ENTROPY_HEADER: [&str; 9] = [
    "step",
    "t",
    "h_eta",
    "D_grad",
    "D_reac",
    "mass12",
    "mass13",
    "defect_L1",
    "min_u",
];
pub const SWEEP_HEADER: [&str; 5] = [
    "epsilon",
    "defect_L1_QT",
    "gap_v",
    "gap_w",
    "ratio_sqrt_eps",
];
pub const DUALITY_HEADER: [&str; 3] = ["step", "t", "residual"];
pub const LIMIT_HEADER: [&str; 7] = ["t", "x", "v", "w", "u1", "u2", "u3"];
pub const LIMIT_ENTROPY_HEADER: [&str; 3] = ["step", "t", "h0"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Levels `0, stride, 2 stride, ...` plus the last one.
pub fn snapshot_levels(levels: usize, stride: usize) -> impl Iterator<Item = usize> {
    let last = levels.saturating_sub(1);
    (0..levels).filter(move |k| k % stride == 0 || *k == last)
}

struct Csv {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut csv = Csv {
            w: csv::Writer::from_writer(BufWriter::new(file)),
            path,
        };
        csv.row(header.iter().map(|s| s.to_string()))?;
        Ok(csv)
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) -> Result<(), CliError> {
        let path = &self.path;
        self.w
            .write_record(fields)
            .map_err(|e| CliError::io(path, e.into()))
    }

    fn finish(mut self) -> Result<PathBuf, CliError> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

pub fn write_fields(
    dir: &Path,
    states: &[State],
    grid: &Grid1D,
    stride: usize,
) -> Result<PathBuf, CliError> {
    let mut csv = Csv::create(dir, "fields.csv", &FIELDS_HEADER)?;
    for k in snapshot_levels(states.len(), stride) {
        let s = &states[k];
        for j in 0..grid.n() {
            let [u1, u2, u3] = s.at(j);
            csv.row([s.t, grid.center(j), u1, u2, u3].map(fmt_f64))?;
        }
    }
    csv.finish()
}

pub fn write_entropy(dir: &Path, reports: &[EntropyReport]) -> Result<PathBuf, CliError> {
    let mut csv = Csv::create(dir, "entropy.csv", &ENTROPY_HEADER)?;
    for r in reports {
        let mut row = vec![r.step.to_string()];
        row.extend(
            [
                r.t,
                r.h_eta,
                r.d_grad,
                r.d_reac,
                r.mass12,
                r.mass13,
                r.defect_l1,
                r.min_u,
            ]
            .map(fmt_f64),
        );
        csv.row(row)?;
    }
    csv.finish()
}

pub fn write_sweep<'a>(
    dir: &Path,
    rows: impl IntoIterator<Item = &'a SweepRow>,
) -> Result<PathBuf, CliError> {
    let mut csv = Csv::create(dir, "sweep.csv", &SWEEP_HEADER)?;
    for r in rows {
        csv.row([r.eps, r.defect_l1_qt, r.gap_v, r.gap_w, r.ratio].map(fmt_f64))?;
    }
    csv.finish()
}

pub fn write_duality(dir: &Path, d: &DualityReport, tau: f64) -> Result<PathBuf, CliError> {
    let mut csv = Csv::create(dir, "duality.csv", &DUALITY_HEADER)?;
    for (i, r) in d.residuals.iter().enumerate() {
        let k = i + 1;
        csv.row([k.to_string(), fmt_f64(k as f64 * tau), fmt_f64(*r)])?;
    }
    csv.finish()
}

/// `limit.csv` with the reconstructed species, and `limit_entropy.csv`.
#[allow(clippy::needless_range_loop)]
pub fn write_limit<M: ModelFunctions + ?Sized>(
    dir: &Path,
    lim: &LimitTrajectory,
    grid: &Grid1D,
    stride: usize,
    funcs: &M,
) -> Result<[PathBuf; 2], CliError> {
    let mut csv = Csv::create(dir, "limit.csv", &LIMIT_HEADER)?;
    for k in snapshot_levels(lim.v.len(), stride) {
        let u = reconstruct_fields(&lim.v[k], &lim.w[k], funcs, Reconstruction::Auto)?;
        for j in 0..grid.n() {
            csv.row(
                [
                    lim.time(k),
                    grid.center(j),
                    lim.v[k][j],
                    lim.w[k][j],
                    u[0][j],
                    u[1][j],
                    u[2][j],
                ]
                .map(fmt_f64),
            )?;
        }
    }
    let fields = csv.finish()?;
    let mut csv = Csv::create(dir, "limit_entropy.csv", &LIMIT_ENTROPY_HEADER)?;
    for (k, h) in lim.h0.iter().enumerate() {
        csv.row([k.to_string(), fmt_f64(lim.time(k)), fmt_f64(*h)])?;
    }
    Ok([fields, csv.finish()?])
}
