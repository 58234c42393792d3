//! Experiment configuration: one TOML file per experiment, grouped in
//! sections, with `section.key=value` overrides from the command line.
//!
//! ```toml
//! [experiment]
//! kind = "converge"
//! seed = 7
//! snapshot_times = [0.1, 0.2]
//!
//! [grid]
//! dim = 2
//! extent = 1.0
//! points = 128
//!
//! [kernel]
//! epsilon = 0.1
//! delta = 0.1
//!
//! [potential]
//! kind = "obstacle"
//! c_f = 1.0
//!
//! [scheme]
//! name = "second-order-implicit"
//! tau = 0.005
//! t_end = 0.2
//!
//! [initial]
//! name = "cos-product"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nlac::coupled::CoupledConfig;
use nlac::stepper::{Scheme, SchemeConfig};
use nlac::{sample_periodic, Grid64, KernelGrid64, KernelSpec64, PotentialKind, PotentialSpec64};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Evolve,
    Converge,
    Cost,
    Coupled,
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "evolve" => Ok(Self::Evolve),
            "converge" => Ok(Self::Converge),
            "cost" => Ok(Self::Cost),
            "coupled" => Ok(Self::Coupled),
            other => Err(HarnessError::Config(format!("unknown experiment kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    /// Half-width `X` of `(-X, X)^dim`.
    #[serde(default = "one")]
    pub extent: f64,
    /// Points per axis.
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: String,
    #[serde(default = "one")]
    pub c_f: f64,
    #[serde(default)]
    pub theta_c: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "default_scheme")]
    pub name: String,
    pub tau: f64,
    pub t_end: f64,
    #[serde(default)]
    pub fp_tol: Option<f64>,
    #[serde(default)]
    pub fp_max_iter: Option<usize>,
}

/// Initial condition selector; every other key is a parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialSection {
    pub name: String,
    #[serde(flatten)]
    pub params: toml::Table,
}

/// Time-step ladder for convergence and cost studies:
/// `tau_k = tau0 * 2^-k`, `k = 0..rungs`, against a second-order implicit
/// benchmark at `tau0 * 2^-benchmark_halvings`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    #[serde(default = "default_tau0")]
    pub tau0: f64,
    #[serde(default = "default_rungs")]
    pub rungs: usize,
    #[serde(default = "default_benchmark_halvings")]
    pub benchmark_halvings: u32,
    /// Rows used by the least-squares order fit, counted from the finest.
    #[serde(default = "default_fit_last")]
    pub fit_last: usize,
    /// Rows with error below this are left out of the fit.
    #[serde(default)]
    pub error_floor: Option<f64>,
    #[serde(default = "default_ladder_schemes")]
    pub schemes: Vec<String>,
}

impl Default for LadderSection {
    fn default() -> Self {
        Self {
            tau0: default_tau0(),
            rungs: default_rungs(),
            benchmark_halvings: default_benchmark_halvings(),
            fit_last: default_fit_last(),
            error_floor: None,
            schemes: default_ladder_schemes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledSection {
    pub diffusivity: f64,
    pub mu: f64,
    pub latent: f64,
    pub alpha: f64,
    pub rho: f64,
    pub theta_e: f64,
    /// Constant initial temperature.
    #[serde(default)]
    pub theta0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub grid: GridSection,
    pub kernel: KernelSection,
    pub potential: PotentialSection,
    pub scheme: SchemeSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub ladder: LadderSection,
    #[serde(default)]
    pub coupled: Option<CoupledSection>,
}

fn one() -> f64 {
    1.0
}

fn default_scheme() -> String {
    Scheme::FirstOrder.name().to_string()
}

fn default_tau0() -> f64 {
    0.005
}

fn default_rungs() -> usize {
    7
}

fn default_benchmark_halvings() -> u32 {
    10
}

fn default_fit_last() -> usize {
    4
}

fn default_ladder_schemes() -> Vec<String> {
    Scheme::all().iter().map(|s| s.name().to_string()).collect()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks that every component can be built.
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        KernelSpec64::new(self.kernel.epsilon, self.kernel.delta, self.grid.dim)?;
        self.potential()?;
        self.scheme_config()?;
        for s in &self.ladder.schemes {
            parse_scheme(s)?;
        }
        if self.experiment.kind == ExperimentKind::Coupled {
            self.coupled_config()?;
        }
        if self.initial_needs_seed() && self.experiment.seed.is_none() {
            return Err(HarnessError::Config(format!(
                "initial condition `{}` is random and needs experiment.seed",
                self.initial.name
            )));
        }
        Ok(())
    }

    pub fn initial_needs_seed(&self) -> bool {
        crate::initial::is_random(&self.initial.name)
    }

    pub fn grid(&self) -> Result<Grid64> {
        Ok(Grid64::cube(self.grid.dim, self.grid.extent, self.grid.points)?)
    }

    pub fn kernel(&self, grid: &Grid64) -> Result<KernelGrid64> {
        let spec = KernelSpec64::new(self.kernel.epsilon, self.kernel.delta, grid.dim())?;
        Ok(sample_periodic(&spec, grid)?)
    }

    pub fn potential(&self) -> Result<PotentialSpec64> {
        let kind = PotentialKind::from_str(&self.potential.kind)?;
        Ok(PotentialSpec64::new(kind, self.potential.c_f, self.potential.theta_c)?)
    }

    pub fn scheme(&self) -> Result<Scheme> {
        parse_scheme(&self.scheme.name)
    }

    pub fn steps(&self) -> Result<usize> {
        steps_for(self.scheme.t_end, self.scheme.tau)
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig<f64>> {
        self.scheme_config_for(self.scheme()?, self.scheme.tau)
    }

    /// Scheme config at another step size, keeping tolerances and `t_end`.
    pub fn scheme_config_for(&self, scheme: Scheme, tau: f64) -> Result<SchemeConfig<f64>> {
        let steps = steps_for(self.scheme.t_end, tau)?;
        let mut cfg = SchemeConfig::new(scheme, self.potential()?, tau, steps)?;
        if let Some(tol) = self.scheme.fp_tol {
            cfg = cfg.with_fp_tol(tol)?;
        }
        if let Some(m) = self.scheme.fp_max_iter {
            cfg = cfg.with_fp_max_iter(m)?;
        }
        Ok(cfg)
    }

    pub fn ladder_schemes(&self) -> Result<Vec<Scheme>> {
        self.ladder.schemes.iter().map(|s| parse_scheme(s)).collect()
    }

    pub fn coupled_config(&self) -> Result<CoupledConfig<f64>> {
        let c = self
            .coupled
            .as_ref()
            .ok_or_else(|| HarnessError::Config("missing [coupled] section".into()))?;
        let cfg = CoupledConfig {
            diffusivity: c.diffusivity,
            mu: c.mu,
            latent: c.latent,
            alpha: c.alpha,
            rho: c.rho,
            theta_e: c.theta_e,
            tau: self.scheme.tau,
            steps: self.steps()?,
            c_f: self.potential.c_f,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_scheme(name: &str) -> Result<Scheme> {
    Ok(Scheme::from_str(name)?)
}

/// `round(t_end / tau)`, rejecting horizons that are not a whole number of
/// steps to within `1e-9` relative.
pub fn steps_for(t_end: f64, tau: f64) -> Result<usize> {
    if !(tau > 0.0) || !(t_end >= 0.0) {
        return Err(HarnessError::Config(format!(
            "need tau > 0 and t_end >= 0, got tau = {tau}, t_end = {t_end}"
        )));
    }
    let k = (t_end / tau).round();
    if ((k * tau - t_end) / t_end.max(tau)).abs() > 1e-9 {
        return Err(HarnessError::Config(format!(
            "t_end = {t_end} is not a whole number of steps of tau = {tau}"
        )));
    }
    Ok(k as usize)
}

/// Applies `section.key=value`, parsing `value` as a TOML value and
/// falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(HarnessError::Config(format!("bad override key `{path}`")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut node = table;
    for key in parents {
        node = node
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("override `{path}`: `{key}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key was just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
