//! The declarative run file and its command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};

use crate::optimizer::SolverConfig;
use crate::orbit::{Integrator, DEFAULT_OUT_SAMPLES, DEFAULT_STEPS};
use crate::potentials::{GrowthParams, Potential, PotentialSpec};

/// Environment variable that replaces `output.dir` (a command-line `--out` still wins).
pub const OUT_DIR_ENV: &str = "ENERGY_ORBIT_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<Vec<f64>>,
}

fn ser_opt_extended<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => crate::potentials::ser_extended(x, s),
        None => s.serialize_none(),
    }
}

/// Settings of the hypothesis checker. Unset growth constants come from the potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu2: Option<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none", serialize_with = "ser_opt_extended")]
    pub ceiling: Option<f64>,
    #[serde(default = "d_box")]
    pub box_radius: f64,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn d_box() -> f64 {
    50.0
}
fn d_samples() -> usize {
    2000
}

impl Default for ConditionsConfig {
    fn default() -> Self {
        Self { mu1: None, mu2: None, ceiling: None, box_radius: d_box(), samples: d_samples(), seed: 0 }
    }
}

impl ConditionsConfig {
    pub fn growth_params(&self, model: &dyn Potential) -> Result<GrowthParams, ConfigError> {
        let base = model.growth_params();
        let pick = |v: Option<f64>, from: Option<f64>, key: &str| {
            v.or(from).ok_or_else(|| ConfigError::invalid(key, "required for a potential without builtin constants"))
        };
        let mu1 = pick(self.mu1, base.map(|p| p.mu1), "conditions.mu1")?;
        let mu2 = pick(self.mu2, base.map(|p| p.mu2), "conditions.mu2")?;
        let ceiling = pick(self.ceiling, base.map(|p| p.ceiling), "conditions.A")?;
        GrowthParams::new(mu1, mu2, ceiling).map_err(|e| ConfigError::invalid("conditions", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_out_samples")]
    pub out_samples: usize,
    #[serde(default)]
    pub integrator: Integrator,
}

fn d_steps() -> usize {
    DEFAULT_STEPS
}
fn d_out_samples() -> usize {
    DEFAULT_OUT_SAMPLES
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { steps: d_steps(), out_samples: d_out_samples(), integrator: Integrator::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "d_dir")]
    pub dir: PathBuf,
    #[serde(default = "d_true")]
    pub emit_orbit_csv: bool,
    #[serde(default)]
    pub emit_history: bool,
    #[serde(default)]
    pub convergence_study: bool,
}

fn d_dir() -> PathBuf {
    PathBuf::from("out")
}
fn d_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: d_dir(), emit_orbit_csv: true, emit_history: false, convergence_study: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    #[serde(default)]
    pub energy: EnergySpec,
    /// `h` is taken from `[energy]`, any value here is overwritten.
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub conditions: ConditionsConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Not echoed into summaries, so that relocating a run does not change its output.
    #[serde(default, skip_serializing)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        if raw.get("solver").and_then(|s| s.get("h")).is_some() {
            return Err(ConfigError::invalid("solver.h", "set the energy as `energy.h` or `energy.list`"));
        }
        let cfg: RunConfig = raw.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn model(&self) -> Result<Box<dyn Potential>, ConfigError> {
        self.potential.build().map_err(|e| ConfigError::invalid("potential", e.to_string()))
    }

    /// The single energy of a solve or check.
    pub fn scalar_energy(&self) -> Result<f64, ConfigError> {
        match (&self.energy.h, &self.energy.list) {
            (Some(h), None) => finite("energy.h", *h),
            (None, _) => Err(ConfigError::invalid("energy.h", "missing")),
            (Some(_), Some(_)) => Err(ConfigError::invalid("energy", "set exactly one of `h` and `list`")),
        }
    }

    /// The energies of a sweep.
    pub fn energy_list(&self) -> Result<Vec<f64>, ConfigError> {
        match (&self.energy.h, &self.energy.list) {
            (None, Some(list)) if list.is_empty() => Err(ConfigError::invalid("energy.list", "empty")),
            (None, Some(list)) => list.iter().map(|h| finite("energy.list", *h)).collect(),
            (None, None) => Err(ConfigError::invalid("energy.list", "missing")),
            (Some(_), _) => Err(ConfigError::invalid("energy", "a sweep takes `list`, not `h`")),
        }
    }

    /// Solver settings for energy `h`, validated.
    pub fn solver_for(&self, h: f64) -> Result<SolverConfig, ConfigError> {
        let cfg = SolverConfig { h, ..self.solver.clone() };
        cfg.validate().map_err(|e| ConfigError::invalid("solver", e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate_common(&self) -> Result<(), ConfigError> {
        if self.potential.dim == 0 {
            return Err(ConfigError::invalid("potential.dim", "must be at least 1"));
        }
        if !(self.conditions.box_radius > 0.0 && self.conditions.box_radius.is_finite()) {
            return Err(ConfigError::invalid("conditions.box_radius", "must be positive"));
        }
        if self.conditions.samples == 0 {
            return Err(ConfigError::invalid("conditions.samples", "must be at least 1"));
        }
        if self.verify.steps < crate::orbit::MIN_STEPS {
            return Err(ConfigError::invalid("verify.steps", format!("must be at least {}", crate::orbit::MIN_STEPS)));
        }
        if self.verify.out_samples < 2 {
            return Err(ConfigError::invalid("verify.out_samples", "must be at least 2"));
        }
        Ok(())
    }
}

fn finite(key: &str, h: f64) -> Result<f64, ConfigError> {
    if h.is_finite() {
        Ok(h)
    } else {
        Err(ConfigError::invalid(key, format!("energy must be finite, got {h}")))
    }
}
