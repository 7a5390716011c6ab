//! Run configuration: schema-versioned TOML, fail-closed on unknown keys.

use policy_newton::driver::{Mode, Overrides};
use policy_newton::error::{Error, Result};
use serde::Deserialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Builtin fixture name or path to a fixture file.
    pub fixture: String,
    #[serde(default = "default_policy")]
    pub policy: String,
    pub algorithm: AlgorithmKind,
    pub epsilon: f64,
    #[serde(default)]
    pub mode: ModeKind,
    pub delta_prime: Option<f64>,
    pub seed: u64,
    /// Initial parameters; zeros when omitted.
    pub theta0: Option<Vec<f64>>,
    /// Gradient-descent step for the baseline algorithm.
    pub step_size: Option<f64>,
    pub trace_path: Option<String>,
    pub summary_path: Option<String>,
    #[serde(default)]
    pub overrides: OverridesConfig,
    pub policy_bounds: Option<PolicyBoundsConfig>,
}

fn default_policy() -> String {
    "tabular-softmax".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    Crpn,
    Acrpn,
    Reinforce,
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    #[default]
    Expectation,
    HighProbability,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverridesConfig {
    pub m_k: Option<usize>,
    pub b_k: Option<usize>,
    pub iters: Option<usize>,
    pub alpha: Option<f64>,
    pub c_prime: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyBoundsConfig {
    pub grad_bound: f64,
    pub hess_bound: f64,
    pub hess_lipschitz: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidInput(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        if self.policy != "tabular-softmax" {
            return Err(Error::InvalidInput(format!(
                "unknown policy kind {:?} (supported: tabular-softmax)",
                self.policy
            )));
        }
        if self.mode == ModeKind::HighProbability && self.delta_prime.is_none() {
            return Err(Error::InvalidInput(
                "high-probability mode requires delta_prime".into(),
            ));
        }
        Ok(())
    }

    pub fn driver_mode(&self) -> Mode {
        match self.mode {
            ModeKind::Expectation => Mode::Expectation,
            ModeKind::HighProbability => Mode::HighProbability {
                delta_prime: self.delta_prime.unwrap_or(0.05),
            },
        }
    }

    pub fn driver_overrides(&self) -> Overrides {
        Overrides {
            grad_batch: self.overrides.m_k,
            hess_batch: self.overrides.b_k,
            iters: self.overrides.iters,
            alpha: self.overrides.alpha,
            c_prime: self.overrides.c_prime,
        }
    }
}
