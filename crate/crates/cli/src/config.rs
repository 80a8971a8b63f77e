//! Fully resolved run settings, written beside every command's outputs.
//! Feeding one back through `drp replay` reproduces the outputs bit for bit.

use std::path::{Path, PathBuf};

use driftrobust::estimator::{PropensitySource, RegressionSource};
use driftrobust::nuisance::{BasisSpec, PropensityConfig, PropensityKind, RegressionConfig, RegressionKind};
use driftrobust::EstimatorConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tool_version: String,
    #[serde(flatten)]
    pub command: CommandConfig,
}

impl RunConfig {
    pub fn new(command: CommandConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum CommandConfig {
    Simulate(SimulateConfig),
    Estimate(EstimateConfig),
    Learn(LearnConfig),
    Evaluate(EvaluateConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Write every potential outcome instead of the logged action and reward.
    pub potential_outcomes: bool,
    /// Append the Gaussian `mu`/`sigma` columns to a potential-outcome table.
    pub metadata: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityChoice {
    Trees,
    Logistic,
    /// Known uniform logging policy; nothing is fitted.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionChoice {
    Trees,
    NadarayaWatson,
    /// `ĝ ≡ 0`.
    Zero,
}

/// Settings shared by every command that fits nuisances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSettings {
    pub folds: usize,
    pub seed: u64,
    /// `None` selects the default basis for the covariate dimension.
    pub basis: Option<BasisSpec>,
    pub propensity: PropensityChoice,
    pub regression: RegressionChoice,
    pub clip_floor: f64,
}

impl NuisanceSettings {
    pub fn estimator_config(&self, num_actions: usize) -> EstimatorConfig {
        let propensity = match self.propensity {
            PropensityChoice::Uniform => PropensitySource::uniform(num_actions),
            PropensityChoice::Trees => PropensitySource::Fit(PropensityConfig {
                clip_floor: self.clip_floor,
                ..PropensityConfig::default()
            }),
            PropensityChoice::Logistic => PropensitySource::Fit(PropensityConfig {
                kind: PropensityKind::Logistic { ridge: 1e-4 },
                clip_floor: self.clip_floor,
            }),
        };
        let regression = match self.regression {
            RegressionChoice::Zero => RegressionSource::Zero,
            RegressionChoice::Trees => RegressionSource::Fit(RegressionConfig::default()),
            RegressionChoice::NadarayaWatson => RegressionSource::Fit(RegressionConfig {
                kind: RegressionKind::NadarayaWatson { bandwidth: None },
            }),
        };
        EstimatorConfig {
            folds: self.folds,
            seed: self.seed,
            basis: self.basis,
            propensity,
            regression,
            ..EstimatorConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub data: PathBuf,
    pub num_actions: Option<usize>,
    pub policy: String,
    /// One radius, or several evaluated with nuisances frozen at the first.
    pub delta: Vec<f64>,
    pub nuisance: NuisanceSettings,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub data: PathBuf,
    pub num_actions: Option<usize>,
    pub delta: f64,
    pub depth: usize,
    pub baseline: bool,
    pub eval_fraction: Option<f64>,
    pub nuisance: NuisanceSettings,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub test: PathBuf,
    pub policy: String,
    pub delta: f64,
    pub kl_sphere: Option<usize>,
    pub seed: u64,
    pub basis: Option<BasisSpec>,
    pub out: PathBuf,
}

/// `report.json` -> `report.config.json`.
pub fn config_path_for(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}
