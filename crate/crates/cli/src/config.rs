//! The merged run configuration consumed by `train` and `info`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voxelseg::model::ModelConfig;
use voxelseg::train::TrainConfig;
use voxelseg::{Error, Result};

/// Everything one training run needs, from a single JSON file. Every section
/// may be omitted to take defaults, but unknown keys are rejected so a typo
/// fails loudly instead of silently training the default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: RunPaths,
}

/// Input locations; either may be left for the command line to supply.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunPaths {
    /// Directory holding one subdirectory per case.
    pub data: Option<PathBuf>,
    /// Fold-assignment JSON written by `split`.
    pub folds: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("run config: {e}")))
    }
}
