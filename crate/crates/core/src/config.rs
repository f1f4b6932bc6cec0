//! The TOML run configuration shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ablation::AblationConfig;
use crate::association::ModelConfig;
use crate::error::{Error, Result};
use crate::simulator::ScenarioConfig;
use crate::tracker::TrackerConfig;
use crate::training::TrainConfig;

/// Settings for all commands; each command reads the sections it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces `scenario.seed`, `model.init_seed` and `train.seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub scenario: ScenarioConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tracker: TrackerConfig,
    pub ablation: AblationConfig,
    pub paths: PathsConfig,
}

/// Default file locations; command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Video container written by `simulate` and read by `track`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub video: Option<PathBuf>,
    /// Training videos; empty means clips are generated from `[scenario]`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub data: Vec<PathBuf>,
    /// Checkpoint written by `train` and read by `track`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint to continue training from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    /// MOT track file written by `track`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracks: Option<PathBuf>,
    /// Evaluation report written by `eval`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    /// Output directory of `ablate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    /// Copy with the top-level seed stamped into every section.
    pub fn resolved(&self) -> RunConfig {
        let mut out = self.clone();
        if let Some(seed) = self.seed {
            out.scenario.seed = seed;
            out.model.init_seed = seed;
            out.train.seed = seed;
        }
        out
    }

    /// Checks that every section is valid and that the model fits the scenario.
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.tracker.validate()?;
        self.ablation.validate()?;
        if self.model.channels != self.scenario.channels {
            return Err(Error::config(
                "model.channels",
                format!("must equal scenario.channels ({})", self.scenario.channels),
            ));
        }
        if self.model.roi != self.scenario.roi {
            return Err(Error::config("model.roi", "must equal scenario.roi"));
        }
        Ok(())
    }
}
