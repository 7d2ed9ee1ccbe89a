use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::SweepConfig;
use crate::imaging::{AugmentConfig, AugmentRegime, RegimeId};
use crate::model::ModelConfig;
use crate::optim::{FocalParams, OptimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    /// Minimum absolute decrease of validation loss that resets patience.
    pub min_delta: f64,
    pub seed: u64,
    pub regime: RegimeId,
    pub eval_every: usize,
    /// Held-out share when no explicit validation set is supplied.
    pub val_fraction: f64,
    pub folds: usize,
    /// Focal gamma used by the A5 regime.
    pub high_gamma: f64,
    /// Learning-rate multiplier used by the A6 regime.
    pub high_lr_mult: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 30,
            batch_size: 16,
            early_stop_patience: 15,
            min_delta: 1e-5,
            seed: 0,
            regime: RegimeId::None,
            eval_every: 1,
            val_fraction: 0.2,
            folds: 5,
            high_gamma: 5.0,
            high_lr_mult: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epochs_max", self.epochs_max),
            ("batch_size", self.batch_size),
            ("early_stop_patience", self.early_stop_patience),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("train: {name} must be at least 1")));
            }
        }
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "train: folds must be at least 2, got {}",
                self.folds
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train: val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if !(0.0..).contains(&self.min_delta) {
            return Err(Error::Config("train: min_delta must be >= 0".into()));
        }
        if !(0.0..).contains(&self.high_gamma)
            || self.high_lr_mult.is_nan()
            || self.high_lr_mult <= 0.0
        {
            return Err(Error::Config(
                "train: high_gamma must be >= 0 and high_lr_mult > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Every setting one training run depends on.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSetup {
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub focal: FocalParams,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub sweep: SweepConfig,
}

impl TrainSetup {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optim.validate()?;
        self.focal.validate()?;
        self.train.validate()?;
        self.sweep.validate()?;
        AugmentRegime::new(self.train.regime, &self.augment).map(|_| ())
    }

    /// Copy with `regime` selected and its loss/optimiser overrides applied.
    pub fn for_regime(&self, regime: RegimeId) -> Self {
        let mut s = self.clone();
        s.train.regime = regime;
        s
    }

    /// Focal parameters in effect for the configured regime.
    pub fn effective_focal(&self) -> FocalParams {
        match self.train.regime {
            RegimeId::HighGamma => FocalParams {
                gamma: self.train.high_gamma,
                ..self.focal
            },
            _ => self.focal,
        }
    }

    /// Optimiser settings in effect for the configured regime.
    pub fn effective_optim(&self) -> OptimConfig {
        match self.train.regime {
            RegimeId::HighLr => self.optim.scaled(self.train.high_lr_mult),
            _ => self.optim.clone(),
        }
    }

    pub fn regime(&self) -> Result<AugmentRegime> {
        AugmentRegime::new(self.train.regime, &self.augment)
    }
}
