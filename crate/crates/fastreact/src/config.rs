//! TOML run configuration. Every key is optional; an empty file describes
//! the reference setup (power law `(1, 1, 1, 5, 1, 1, 0.005)`, `N = 128`,
//! `L = 1`, `tau = 1e-3`, `T = 0.5`, `eps = 1e-2`, well-prepared data).
//!
//! ```toml
//! [model]
//! preset = "power_law"      # or "identity": f_i = q_i = identity
//! alpha1 = 1.0              # alpha2, alpha3, delta, beta, gamma, alpha
//! certified = false         # refuse parameters failing the sufficient conditions
//!
//! [grid]
//! n = 128
//! length = 1.0
//!
//! [scheme]
//! tau = 1e-3
//! eta = 0.0
//! eps = 1e-2                # inf switches reactions off
//! newton_tol = 1e-10
//! newton_max = 50
//! strict_tau = false
//! t_final = 0.5
//!
//! [init]
//! u2 = "1 + 0.5*cos(pi*x)"
//! u3 = "1 + 0.5*sin(pi*x)^2"
//! well_prepared = true      # u1 from the reaction equilibrium; else set u1
//!
//! [output]
//! dir = "out"
//! snapshot_stride = 50
//! fields = true
//! entropy = true
//! duality = false
//! ```

use std::path::{Path, PathBuf};

use fastreact_core::fastlimit::{well_prepared_init, SweepConfig};
use fastreact_core::model::{build_power_law, check_power_law_conditions};
use fastreact_core::{Grid1D, Identity, ModelFunctions, PowerLawParams, SchemeParams, State};
use serde::Deserialize;

use crate::error::CliError;
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    PowerLaw,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Preset,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub certified: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = PowerLawParams::REFERENCE;
        ModelSection {
            preset: Preset::PowerLaw,
            alpha1: p.alpha1,
            alpha2: p.alpha2,
            alpha3: p.alpha3,
            delta: p.delta,
            beta: p.beta,
            gamma: p.gamma,
            alpha: p.alpha,
            certified: false,
        }
    }
}

impl ModelSection {
    pub fn params(&self) -> PowerLawParams {
        PowerLawParams {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            delta: self.delta,
            beta: self.beta,
            gamma: self.gamma,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n: 128,
            length: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub tau: f64,
    pub eta: f64,
    pub eps: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub strict_tau: bool,
    pub t_final: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection {
            tau: 1e-3,
            eta: 0.0,
            eps: 1e-2,
            newton_tol: 1e-10,
            newton_max: 50,
            strict_tau: false,
            t_final: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub u1: Option<String>,
    pub u2: String,
    pub u3: String,
    pub well_prepared: bool,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            u1: None,
            u2: "1 + 0.5*cos(pi*x)".into(),
            u3: "1 + 0.5*sin(pi*x)^2".into(),
            well_prepared: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write every `snapshot_stride`-th level to `fields.csv`; the final
    /// level is always written.
    pub snapshot_stride: usize,
    pub fields: bool,
    pub entropy: bool,
    pub duality: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            snapshot_stride: 50,
            fields: true,
            entropy: true,
            duality: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub scheme: SchemeSection,
    pub init: InitSection,
    pub output: OutputSection,
}

pub type Model = Box<dyn ModelFunctions + Send + Sync>;

/// A validated configuration with the model built and initial data sampled.
pub struct Setup {
    pub model: Model,
    /// Set for the power-law preset.
    pub params: Option<PowerLawParams>,
    pub grid: Grid1D,
    pub scheme: SchemeParams,
    pub t_final: f64,
    pub init: State,
    pub well_prepared: bool,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map_or("config".to_string(), |s| locate_key(text, s.start));
            CliError::config(key, e.message().trim())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Validates every section. With `enforce_certified`, `model.certified`
    /// rejects parameters failing the sufficient conditions.
    pub fn setup(&self, enforce_certified: bool) -> Result<Setup, CliError> {
        let (model, params): (Model, _) = match self.model.preset {
            Preset::PowerLaw => {
                let params = self.model.params();
                let m = build_power_law(params).map_err(|e| CliError::from_core("model", e))?;
                if enforce_certified && self.model.certified {
                    let report = check_power_law_conditions(&params);
                    if !report.passed() {
                        return Err(CliError::config(
                            "model.certified",
                            format!("parameters fail the sufficient conditions:\n{report}"),
                        ));
                    }
                }
                (Box::new(m), Some(params))
            }
            Preset::Identity => (Box::new(Identity), None),
        };
        let grid = Grid1D::new(self.grid.n, self.grid.length)
            .map_err(|e| CliError::from_core("grid", e))?;
        let s = &self.scheme;
        let scheme = SchemeParams {
            tau: s.tau,
            eta: s.eta,
            eps: s.eps,
            newton_tol: s.newton_tol,
            newton_max: s.newton_max,
            strict_tau: s.strict_tau,
        };
        scheme
            .validate()
            .map_err(|e| CliError::from_core("scheme", e))?;
        if !(s.t_final >= 0.0 && s.t_final.is_finite()) {
            return Err(CliError::config(
                "scheme.t_final",
                "must be nonnegative and finite",
            ));
        }
        if self.output.snapshot_stride == 0 {
            return Err(CliError::config(
                "output.snapshot_stride",
                "must be at least 1",
            ));
        }
        let u2 = sample("init.u2", &self.init.u2, &grid)?;
        let u3 = sample("init.u3", &self.init.u3, &grid)?;
        let init = match (&self.init.u1, self.init.well_prepared) {
            (Some(_), true) => {
                return Err(CliError::config(
                    "init.u1",
                    "must be omitted when init.well_prepared is true",
                ));
            }
            (None, false) => {
                return Err(CliError::config(
                    "init.u1",
                    "required when init.well_prepared is false",
                ))
            }
            (None, true) => well_prepared_init(&u2, &u3, &grid, &*model)
                .map_err(|e| CliError::from_core("init", e))?,
            (Some(u1), false) => {
                let u1 = sample("init.u1", u1, &grid)?;
                State::new([u1, u2, u3], 0.0).map_err(|e| CliError::from_core("init", e))?
            }
        };
        if !(init.min() > 0.0) {
            return Err(CliError::config(
                "init",
                "initial data must be strictly positive",
            ));
        }
        Ok(Setup {
            model,
            params,
            grid,
            scheme,
            t_final: s.t_final,
            init,
            well_prepared: self.init.well_prepared,
            output: self.output.clone(),
        })
    }
}

impl Setup {
    /// Sweep setup sharing grid, time stepping and `(u2, u3)` data.
    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            grid: self.grid,
            t_final: self.t_final,
            tau: self.scheme.tau,
            eta: self.scheme.eta,
            newton_tol: self.scheme.newton_tol,
            newton_max: self.scheme.newton_max,
            u2_init: self.init.u[1].clone(),
            u3_init: self.init.u[2].clone(),
        }
    }
}

fn sample(key: &str, src: &str, grid: &Grid1D) -> Result<Vec<f64>, CliError> {
    let e = Expr::parse(src).map_err(|err| CliError::config(key, err.to_string()))?;
    let vals = grid.sample(|x| e.eval(x));
    if let Some(j) = vals.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(CliError::config(
            key,
            format!(
                "must be positive and finite, got {} at x = {}",
                vals[j],
                grid.center(j)
            ),
        ));
    }
    Ok(vals)
}

/// Best-effort `section.key` for a byte offset, from the nearest table
/// header and key before it.
fn locate_key(text: &str, offset: usize) -> String {
    let mut section = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        if pos > offset {
            break;
        }
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.split(']').next()) {
            section = name.trim().to_string();
            key.clear();
        } else if let Some((k, _)) = t.split_once('=') {
            key = k.trim().to_string();
        }
        pos += line.len();
    }
    match (section.is_empty(), key.is_empty()) {
        (_, true) if section.is_empty() => "config".into(),
        (_, true) => section,
        (true, false) => key,
        (false, false) => format!("{section}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_reference() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        let s = c.setup(true).unwrap();
        let r = SweepConfig::reference();
        let sc = s.sweep_config();
        assert_eq!(sc.grid, r.grid);
        assert_eq!((sc.tau, sc.t_final, sc.eta), (r.tau, r.t_final, r.eta));
        for (a, b) in sc.u2_init.iter().zip(&r.u2_init) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in sc.u3_init.iter().zip(&r.u3_init) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn key_of(text: &str) -> String {
        let err = RunConfig::from_toml(text).and_then(|c| c.setup(true).map(|_| ()));
        match err {
            Err(CliError::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of("[scheme]\ntau = -1e-3\n"), "scheme.tau");
        assert_eq!(key_of("[scheme]\nnewton_max = 0\n"), "scheme.newton_max");
        assert_eq!(key_of("[scheme]\nt_final = -1.0\n"), "scheme.t_final");
        assert_eq!(key_of("[grid]\nn = 2\n"), "grid.n");
        assert_eq!(key_of("[model]\ndelta = 0.5\n"), "model.delta");
        assert_eq!(
            key_of("[model]\nalpha = 0.1\ncertified = true\n"),
            "model.certified"
        );
        assert_eq!(key_of("[init]\nu2 = \"1 + foo\"\n"), "init.u2");
        assert_eq!(key_of("[init]\nu2 = \"cos(pi*x)\"\n"), "init.u2");
        assert_eq!(key_of("[init]\nwell_prepared = false\n"), "init.u1");
        assert_eq!(key_of("[scheme]\ntau = \"big\"\n"), "scheme.tau");
        assert_eq!(key_of("[scheme]\ntua = 1.0\n"), "scheme.tua");
        assert_eq!(
            key_of("[output]\nsnapshot_stride = 0\n"),
            "output.snapshot_stride"
        );
    }

    #[test]
    fn strict_tau_is_enforced() {
        assert_eq!(key_of("[scheme]\nstrict_tau = true\n"), "scheme.eta");
        assert_eq!(
            key_of("[scheme]\nstrict_tau = true\neta = 0.1\n"),
            "scheme.tau"
        );
        let c = RunConfig::from_toml("[scheme]\nstrict_tau = true\neta = 0.5\n").unwrap();
        assert!(c.setup(true).is_ok());
    }

    #[test]
    fn certified_flag_only_enforced_on_request() {
        let c = RunConfig::from_toml("[model]\nalpha = 0.1\ncertified = true\n").unwrap();
        assert!(c.setup(false).is_ok());
    }

    #[test]
    fn explicit_u1_and_infinite_eps() {
        let c = RunConfig::from_toml(
            "[scheme]\neps = inf\n[init]\nwell_prepared = false\nu1 = \"2\"\n",
        )
        .unwrap();
        let s = c.setup(true).unwrap();
        assert!(s.scheme.eps.is_infinite());
        assert!(s.init.u[0].iter().all(|v| *v == 2.0));
    }
}
