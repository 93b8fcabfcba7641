//! Resolved CLI configuration: defaults, overridden by an optional JSON
//! config file, overridden by flags. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use retarget_core::datagen::GenConfig;
use retarget_core::net::TrainConfig;
use retarget_core::runtime::RuntimeConfig;
use retarget_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Base seed for commands that take none explicitly.
    pub seed: u64,
    pub rig_vertices: usize,
    pub rig_targets: usize,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub runtime: RuntimeConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            seed: 0,
            rig_vertices: 2000,
            rig_targets: 62,
            gen: GenConfig::default(),
            train: TrainConfig::default(),
            runtime: RuntimeConfig::default(),
        }
    }
}

impl CliConfig {
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(CliConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| {
                    Error::invalid(format!("config file {}: {e}", p.display()))
                })
            }
        }
    }
}
