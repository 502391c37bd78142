//! Experiment configuration: TOML (`key = value` with `[sections]`) or JSON.

use std::path::{Path, PathBuf};

use bsdelab_core::lab::Sampling;
use bsdelab_core::{Scheme, Selector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Envelope,
    Dependence,
    Counterexample,
    Uniqueness,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Envelope => "envelope",
            Command::Dependence => "dependence",
            Command::Counterexample => "counterexample",
            Command::Uniqueness => "uniqueness",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// Terminal values `xi_n`, one per curve point.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xi: Vec<String>,
    /// Catalog family name or an expression in `t, y, z, lam`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambdas: Vec<f64>,
    /// Base parameter for expression families (catalog families carry their own).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lam0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lam_domain: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub y_min: f64,
    pub y_max: f64,
    pub y_step: f64,
    #[serde(default = "default_z")]
    pub z: Vec<f64>,
    #[serde(default)]
    pub t: f64,
}

fn default_z() -> Vec<f64> {
    vec![0.0]
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            y_min: -1.0,
            y_max: 1.0,
            y_step: 0.01,
            z: default_z(),
            t: 0.0,
        }
    }
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.y_max - self.y_min) / self.y_step).round() as usize + 1;
        if count == 1 {
            return vec![self.y_min];
        }
        (0..count)
            .map(|i| self.y_min + (self.y_max - self.y_min) * i as f64 / (count - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_max_enum")]
    pub max_enum_n: usize,
    #[serde(default = "default_samples")]
    pub sample_count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_enum() -> usize {
    Sampling::default().max_enum_steps
}

fn default_samples() -> usize {
    Sampling::default().samples
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            max_enum_n: default_max_enum(),
            sample_count: default_samples(),
            seed: 0,
        }
    }
}

impl From<SamplingConfig> for Sampling {
    fn from(s: SamplingConfig) -> Sampling {
        Sampling {
            max_enum_steps: s.max_enum_n,
            samples: s.sample_count,
            seed: s.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default = "default_driver")]
    pub driver: String,
    #[serde(default = "default_terminal")]
    pub terminal: String,
    /// Linear-growth constant for expression drivers.
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<f64>,
    /// Lipschitz constant for expression drivers.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    /// Time steps; chosen from the largest `m` when absent.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_schedule: Option<Vec<f64>>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Envelope grid step; `dt` inside solves, 1e-3 for `envelope`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default = "default_selector")]
    pub selector: Selector,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    /// Counterexample indices `n`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ns: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_driver() -> String {
    "zero".into()
}

fn default_terminal() -> String {
    "0".into()
}

fn default_horizon() -> f64 {
    1.0
}

fn default_scheme() -> Scheme {
    Scheme::Explicit
}

fn default_selector() -> Selector {
    Selector::Min
}

fn default_threshold() -> f64 {
    1e-2
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        ExperimentConfig {
            command,
            driver: default_driver(),
            terminal: default_terminal(),
            growth: None,
            lipschitz: None,
            horizon: default_horizon(),
            steps: None,
            m_schedule: None,
            scheme: default_scheme(),
            h: None,
            selector: default_selector(),
            threshold: default_threshold(),
            perturbation: None,
            ns: Vec::new(),
            grid: None,
            sampling: SamplingConfig::default(),
            output: None,
        }
    }

    /// Parse TOML or JSON; JSON is recognised by a leading `{`.
    /// `command` may be left out of the text when `fallback` supplies it.
    pub fn from_str(text: &str, fallback: Option<Command>) -> Result<Self, CliError> {
        let mut value: serde_json::Value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?
        } else {
            let t: toml::Value =
                toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
            serde_json::to_value(t).map_err(|e| CliError::config(format!("config: {e}")))?
        };
        if let (Some(cmd), Some(obj)) = (fallback, value.as_object_mut()) {
            obj.insert("command".into(), serde_json::Value::from(cmd.as_str()));
        }
        serde_json::from_value(value).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: &Path, fallback: Option<Command>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("config: cannot read {}: {e}", path.display())))?;
        Self::from_str(&text, fallback)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}
