use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use isscascade::hybrid_sim::AdtParams;
use isscascade::iss_check::{GainExperiment, SamplingBox};
use isscascade::kfun::ComparisonFunction;
use isscascade::sampled_loop::section5::Section5Options;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub system: SystemSection,
    #[serde(default)]
    pub certificate: CertificateSection,
    /// Filter and trigger design of the sampled loop.
    #[serde(default)]
    pub sampled: Option<Section5Options>,
    #[serde(default)]
    pub adt: Option<AdtParams>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub check: CheckSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSection {
    /// `ẋ = A x + B e`, `ė = F e + G d` per mode.
    Linear { modes: Vec<LinearModeSpec> },
    Builtin { name: Builtin },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    ScalarCascade,
    LinearTwoMode,
    /// The event-triggered two-mode output-feedback loop.
    Section5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModeSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CertificateSection {
    /// Quadratic certificates for linear systems, the registry for builtins.
    #[default]
    Auto,
    /// Jump gain and decay rates given directly; only the dwell-time bound
    /// can be computed from these.
    Gains {
        chi: ComparisonFunction,
        alpha: Vec<ComparisonFunction>,
        #[serde(default)]
        c0: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt_base: f64,
    pub event_tol: f64,
    pub horizon_t: f64,
    pub horizon_j: usize,
    pub seed: u64,
    /// margin in the dwell-time condition
    pub epsilon: f64,
    pub x0: Option<Vec<f64>>,
    pub e0: Option<Vec<f64>>,
    /// bound on the random piecewise-constant input (0 for none)
    pub disturbance_level: f64,
    pub disturbance_period: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt_base: 1e-2,
            event_tol: 1e-9,
            horizon_t: 20.0,
            horizon_j: 1_000_000,
            seed: 0,
            epsilon: 1e-3,
            x0: None,
            e0: None,
            disturbance_level: 0.0,
            disturbance_period: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv: bool,
    /// keep every n-th integration step in CSV output
    pub stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            csv: true,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub samples: usize,
    pub tol: f64,
    pub w_tol: f64,
    pub grad_step: f64,
    pub grad_tol: f64,
    pub region: SamplingBox,
    pub gain: Option<GainExperiment>,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            samples: 10_000,
            tol: 1e-9,
            w_tol: 1e-6,
            grad_step: 1e-6,
            grad_tol: 1e-5,
            region: SamplingBox::default(),
            gain: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if let SystemSection::Linear { modes } = &self.system {
            if modes.is_empty() {
                bail!("a linear system needs at least one mode");
            }
        }
        if self.sampled.is_some() && self.system != (SystemSection::Builtin { name: Builtin::Section5 }) {
            bail!("the [sampled] section only applies to the section5 builtin");
        }
        if let Some(adt) = &self.adt {
            if !(adt.tau_a > 0.0 && adt.n0 >= 1.0) {
                bail!("adt needs tau_a > 0 and N0 >= 1");
            }
        }
        if !(self.sim.dt_base > 0.0 && self.sim.horizon_t >= 0.0) {
            bail!("sim needs dt_base > 0 and horizon_t >= 0");
        }
        if self.output.stride == 0 {
            bail!("output.stride must be at least 1");
        }
        Ok(())
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self.system, SystemSection::Builtin { name: Builtin::Section5 })
    }
}
