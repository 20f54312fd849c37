//! TOML run configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Closure, Kernel};
use crate::model::{build_survival, AgeGrid, ModelSpec, DEFAULT_NORMALIZATION_TOL};
use crate::spreading::FrontSlice;
use crate::waves::{Branch, ShiftInterpolation};

/// A scalar applied at every age node, or one value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(f64),
    Nodes(Vec<f64>),
}

impl Profile {
    fn expand(&self, name: &str, n: usize) -> Result<Vec<f64>> {
        match self {
            Profile::Constant(v) => Ok(vec![*v; n]),
            Profile::Nodes(v) if v.len() == n => Ok(v.clone()),
            Profile::Nodes(v) => Err(Error::Config(format!("{name} has {} values, n_ages is {n}", v.len()))),
        }
    }
}

/// Transmission `K(a, a')`: a constant or a full matrix of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Transmission {
    Constant(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub a_max: f64,
    #[serde(alias = "n_a")]
    pub n_ages: usize,
    /// Mortality rate `mu(a)`.
    pub mu: Profile,
    /// Birth rate `beta(a)`.
    pub beta: Profile,
    pub transmission: Transmission,
    #[serde(default = "one")]
    pub transmission_scale: f64,
    #[serde(default = "default_normalization")]
    pub normalization_tol: f64,
}

fn one() -> f64 {
    1.0
}

fn default_normalization() -> f64 {
    DEFAULT_NORMALIZATION_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian { sigma: f64 },
    Laplace { scale: f64 },
    CompactBump { radius: f64 },
    /// CSV with header `y,J`; relative paths resolve against the config file.
    Tabulated { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveConfig {
    /// Speed of the wave; ignored when `critical` is set.
    pub c: Option<f64>,
    pub critical: bool,
    pub l_xi: f64,
    pub n_xi: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub branch: Branch,
    pub interpolation: ShiftInterpolation,
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self {
            c: None,
            critical: false,
            l_xi: 30.0,
            n_xi: 1201,
            tol: 1e-8,
            max_iter: 500,
            branch: Branch::Maximal,
            interpolation: ShiftInterpolation::LogLinear,
        }
    }
}

/// Initial data of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `amplitude` on `|x| <= radius`, zero elsewhere, at every age.
    Indicator { radius: f64, amplitude: f64 },
    /// `amplitude` for `x <= 0`, zero elsewhere.
    Step { amplitude: f64 },
    Constant { value: f64 },
}

impl InitialData {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialData::Indicator { radius, amplitude } => {
                if x.abs() <= *radius {
                    *amplitude
                } else {
                    0.0
                }
            }
            InitialData::Step { amplitude } => {
                if x <= 0.0 {
                    *amplitude
                } else {
                    0.0
                }
            }
            InitialData::Constant { value } => *value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ClosureKind {
    Zero,
    Edge,
}

impl From<ClosureKind> for Closure {
    fn from(k: ClosureKind) -> Self {
        match k {
            ClosureKind::Zero => Closure::Zero,
            ClosureKind::Edge => Closure::Edge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub t_end: f64,
    /// Half width of the x domain.
    pub domain: f64,
    pub n_x: usize,
    pub closure: ClosureKind,
    pub snapshots: Vec<f64>,
    pub initial: InitialData,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            t_end: 2.0,
            domain: 20.0,
            n_x: 401,
            closure: ClosureKind::Zero,
            snapshots: vec![0.0, 1.0, 2.0],
            initial: InitialData::Indicator { radius: 1.0, amplitude: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Speed,
    Outer,
    Inner,
    Hair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpreadConfig {
    pub experiment: Experiment,
    pub t_end: f64,
    pub domain: f64,
    pub n_x: usize,
    /// Front level.
    pub rho: f64,
    pub slice: FrontSlice,
    pub radius: f64,
    pub sample_every: f64,
    pub outer_offset: f64,
    pub c_frac: f64,
    pub epsilon: f64,
    /// Starting level of the hair-trigger run.
    pub rho0: f64,
    pub x0: f64,
}

impl Default for SpreadConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Speed,
            t_end: 35.0,
            domain: 80.0,
            n_x: 1601,
            rho: 0.5,
            slice: FrontSlice::AgeMax,
            radius: 1.0,
            sample_every: 0.5,
            outer_offset: 0.3,
            c_frac: 0.5,
            epsilon: 0.05,
            rho0: 0.1,
            x0: 0.0,
        }
    }
}

/// Override lists for `sweep`; the sweep runs their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kappa_scale: Vec<f64>,
    pub sigma: Vec<f64>,
    pub a_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub wave: WaveConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub spread: SpreadConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// A parsed config together with the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub source: String,
    pub dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let source = std::fs::read_to_string(path)?;
        let config = Self::parse(&source)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, source, dir })
    }

    pub fn kernel(&self, base: &Path) -> Result<Kernel> {
        match &self.kernel {
            KernelConfig::Gaussian { sigma } => Kernel::gaussian(*sigma),
            KernelConfig::Laplace { scale } => Kernel::laplace(*scale),
            KernelConfig::CompactBump { radius } => Kernel::compact_bump(*radius),
            KernelConfig::Tabulated { file } => Kernel::from_csv(&base.join(file)),
        }
    }

    /// The model as configured.
    pub fn model(&self, base: &Path) -> Result<ModelSpec> {
        let kernel = self.kernel(base)?;
        self.model_with(kernel, self.model.a_max, false)
    }

    /// The model with another kernel and age span. With `renormalize`, beta is
    /// rescaled so that `int gamma = 1` still holds on the new span.
    pub fn model_with(&self, kernel: Kernel, a_max: f64, renormalize: bool) -> Result<ModelSpec> {
        let m = &self.model;
        let ages = AgeGrid::new(a_max, m.n_ages)?;
        let n = m.n_ages;
        let mu = m.mu.expand("mu", n)?;
        let mut beta = m.beta.expand("beta", n)?;
        let k = match &m.transmission {
            Transmission::Constant(v) => vec![*v; n * n],
            Transmission::Matrix(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!("transmission must be a {n} x {n} matrix")));
                }
                rows.concat()
            }
        };
        if renormalize {
            let pi = build_survival(&mu, &ages)?;
            let w = ages.weights();
            let total: f64 = w.iter().zip(&beta).zip(&pi).map(|((w, b), p)| w * b * p).sum();
            if !(total > 0.0) {
                return Err(Error::Config("birth rate integrates to zero".into()));
            }
            beta.iter_mut().for_each(|b| *b /= total);
        }
        ModelSpec::from_rates(ages, mu, beta, k, kernel, m.normalization_tol)?.with_transmission_scale(m.transmission_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const R1: &str = r#"
[model]
a_max = 1.0
n_ages = 21
mu = 0.0
beta = 1.0
transmission = 1.0

[kernel]
family = "gaussian"
sigma = 1.0
"#;

    #[test]
    fn reference_config_builds_the_reference_model() {
        let cfg = Config::parse(R1).unwrap();
        let spec = cfg.model(Path::new(".")).unwrap();
        let reference = ModelSpec::reference(21, 1.0).unwrap();
        assert_eq!(spec.gamma(), reference.gamma());
        assert_eq!(spec.transmission_matrix(), reference.transmission_matrix());
        assert_eq!(cfg.wave, WaveConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = R1.replace("sigma = 1.0", "sigma = 1.0\nsigmaa = 2.0");
        assert!(matches!(Config::parse(&bad), Err(Error::Config(_))));
        let bad = format!("{R1}\n[wave]\ntoll = 1e-8\n");
        assert!(matches!(Config::parse(&bad), Err(Error::Config(_))));
        let bad = format!("{R1}\n[extra]\n");
        assert!(Config::parse(&bad).is_err());
    }

    #[test]
    fn per_node_profiles_must_match_the_grid() {
        let bad = R1.replace("mu = 0.0", "mu = [0.0, 0.0]");
        let cfg = Config::parse(&bad).unwrap();
        assert!(matches!(cfg.model(Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn renormalized_span_keeps_the_birth_integral() {
        let cfg = Config::parse(R1).unwrap();
        let spec = cfg.model_with(Kernel::gaussian(1.0).unwrap(), 2.0, true).unwrap();
        assert!((spec.gamma_integral() - 1.0).abs() < 1e-12);
        assert!(cfg.model_with(Kernel::gaussian(1.0).unwrap(), 2.0, false).is_err());
    }
}
