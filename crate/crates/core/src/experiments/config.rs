use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SperlError};
use crate::mv::MvTrainConfig;
use crate::sperl_q::QLearnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    MvTrain,
    BpiVerify,
    QLearn,
    OracleFuzz,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::MvTrain,
        Suite::BpiVerify,
        Suite::QLearn,
        Suite::OracleFuzz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::MvTrain => "mv-train",
            Suite::BpiVerify => "bpi-verify",
            Suite::QLearn => "q-learn",
            Suite::OracleFuzz => "oracle-fuzz",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = SperlError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| SperlError::Config(format!("unknown suite `{s}`")))
    }
}

/// Scale of the mean-variance run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 100 periods, 5000 iterations.
    Paper,
    /// 20 periods, 500 iterations.
    #[default]
    Desk,
}

impl FromStr for Preset {
    type Err = SperlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(SperlError::Config(format!("unknown preset `{s}`"))),
        }
    }
}

fn default_instances() -> usize {
    100
}

/// Everything a suite run depends on. Output paths and thread counts are
/// not part of it, so the echoed config identifies the artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: Suite,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub preset: Preset,
    /// Random instances for `bpi-verify` and `oracle-fuzz`.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Path cap for trajectory enumeration in `oracle-fuzz`.
    #[serde(default)]
    pub max_leaves: Option<usize>,
    /// Annual drift for `mv-train`; ignored when `mv` is given.
    #[serde(default)]
    pub mu: Option<f64>,
    /// Full `mv-train` settings replacing the preset.
    #[serde(default)]
    pub mv: Option<MvTrainConfig>,
    #[serde(default)]
    pub q_learning: Option<QLearnConfig>,
    /// Episode budget override for `q-learn`.
    #[serde(default)]
    pub episodes: Option<usize>,
    /// Write per-iteration traces next to the regular artifacts.
    #[serde(default)]
    pub trace: bool,
}

impl ExperimentConfig {
    pub fn new(suite: Suite) -> Self {
        Self {
            suite,
            seed: 0,
            preset: Preset::default(),
            instances: default_instances(),
            max_leaves: None,
            mu: None,
            mv: None,
            q_learning: None,
            episodes: None,
            trace: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| SperlError::Config(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| SperlError::Config(format!("{}: {e}", path.display())))
    }
}

/// Where and how a suite runs; does not affect artifact contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads for independent instances; `None` runs sequentially.
    pub jobs: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let err =
            ExperimentConfig::from_json("{\"suite\": \"q-learn\",\n \"sede\": 3}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sede") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn defaults_fill_missing_fields() {
        let cfg = ExperimentConfig::from_json("{\"suite\": \"bpi-verify\", \"seed\": 7}").unwrap();
        assert_eq!(cfg.instances, 100);
        assert_eq!(cfg.preset, Preset::Desk);
        assert_eq!("oracle-fuzz".parse::<Suite>().unwrap(), Suite::OracleFuzz);
        assert!("nope".parse::<Suite>().is_err());
    }
}
