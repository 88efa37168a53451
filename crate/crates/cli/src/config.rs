use std::path::{Path, PathBuf};

use meshcodec::dataset::SplitScheme;
use meshcodec::model::ArchitectureConfig;
use meshcodec::trainer::TrainConfig;
use meshcodec::{Error, Result};
use serde::{Deserialize, Serialize};

/// Contents of a `--config` file. Every section is optional and falls back
/// to its defaults; command-line flags override file values.
///
/// ```json
/// {
///   "architecture": { "m": 512, "encoder_widths": [32, 64, 128] },
///   "training": { "epochs": 300, "batch_size": 8, "lr": 0.001 },
///   "data": "./shrec11",
///   "split": "shrec11"
/// }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub architecture: ArchitectureConfig,
    pub training: TrainConfig,
    pub data: Option<PathBuf>,
    pub split: Option<SplitScheme>,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.training.validate()
    }
}
