//! The run configuration file: one TOML document with a section per
//! pipeline stage. Unknown keys are rejected everywhere.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{CostParams, ModeThresholds, SweepConfig};
use crate::imaging::{AugmentConfig, PreprocConfig};
use crate::model::ModelConfig;
use crate::optim::{FocalParams, OptimConfig};
use crate::saliency::SaliencyConfig;
use crate::synthgen::GenParams;
use crate::training::{TrainConfig, TrainSetup};

pub const TOOL_NAME: &str = "samm2d";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub gen: GenParams,
    pub preprocess: PreprocConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub focal: FocalParams,
    pub train: TrainConfig,
    pub calibration: SweepConfig,
    pub modes: ModeThresholds,
    pub cost: CostParams,
    pub saliency: SaliencyConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.preprocess.validate()?;
        self.setup().validate()?;
        self.modes.validate()?;
        self.cost.validate()?;
        self.saliency.validate()
    }

    pub fn setup(&self) -> TrainSetup {
        TrainSetup {
            model: self.model.clone(),
            optim: self.optim.clone(),
            focal: self.focal,
            train: self.train.clone(),
            augment: self.augment,
            sweep: self.calibration.clone(),
        }
    }

    /// Header lines for text outputs: tool, version, then the resolved
    /// config as TOML.
    pub fn provenance_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("{TOOL_NAME} {TOOL_VERSION}")];
        lines.extend(self.to_toml().lines().map(str::to_string));
        lines
    }

    /// JSON object `{tool, version, config}` for structured outputs.
    pub fn provenance_json(&self) -> serde_json::Value {
        serde_json::json!({
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "config": self,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn roundtrips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.train.epochs_max = 7;
        cfg.model.pyramid_stages = Some(vec![3, 4]);
        cfg.saliency.stage = Some(2);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_toml("[train]\nepochs = 3\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("[nonsense]\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[train]\nbatch_size = 0\n").is_err());
        assert!(RunConfig::from_toml("[cost]\nprevalence = 1.5\n").is_err());
    }
}
