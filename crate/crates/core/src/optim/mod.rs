//! Loss, optimiser, learning-rate schedule and gradient clipping.

mod adamw;
mod clip;
mod focal;
mod schedule;

pub use adamw::AdamW;
pub use clip::{clip_global_norm, global_norm};
pub use focal::{focal_loss_node, focal_term, smooth_focal_loss, FocalParams, PROB_CLAMP};
pub use schedule::lr_factor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamGroup;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub encoder_lr: f64,
    pub head_lr: f64,
    /// When set, overrides the group rates: head = base, encoders = base / 10.
    pub base_lr: Option<f64>,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub warmup_epochs: f64,
    #[serde(alias = "restart_T0_epochs")]
    pub restart_t0_epochs: f64,
    pub restart_mult: f64,
    pub eta_min_frac: f64,
    pub clip_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            encoder_lr: 1e-5,
            head_lr: 1e-4,
            base_lr: None,
            weight_decay: 1e-4,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            warmup_epochs: 5.0,
            restart_t0_epochs: 10.0,
            restart_mult: 1.0,
            eta_min_frac: 0.0,
            clip_norm: 1.0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("encoder_lr", self.encoder_lr),
            ("head_lr", self.head_lr),
            ("adam_eps", self.adam_eps),
            ("restart_t0_epochs", self.restart_t0_epochs),
            ("clip_norm", self.clip_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "optim: {name} must be positive, got {v}"
                )));
            }
        }
        if let Some(b) = self.base_lr {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!(
                    "optim: base_lr must be positive, got {b}"
                )));
            }
        }
        if !(0.0..).contains(&self.weight_decay) || !(0.0..).contains(&self.warmup_epochs) {
            return Err(Error::Config(
                "optim: weight_decay and warmup_epochs must be >= 0".into(),
            ));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::Config(format!(
                "optim: betas {:?} outside [0, 1)",
                self.betas
            )));
        }
        if !(1.0..).contains(&self.restart_mult) {
            return Err(Error::Config("optim: restart_mult must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eta_min_frac) {
            return Err(Error::Config("optim: eta_min_frac outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Un-scheduled learning rate of a parameter group.
    pub fn group_lr(&self, group: ParamGroup) -> f64 {
        match (self.base_lr, group) {
            (Some(b), ParamGroup::Head) => b,
            (Some(b), _) => b / 10.0,
            (None, ParamGroup::Head) => self.head_lr,
            (None, _) => self.encoder_lr,
        }
    }

    pub fn factor(&self, epoch_progress: f64) -> f64 {
        lr_factor(
            epoch_progress,
            self.warmup_epochs,
            self.restart_t0_epochs,
            self.restart_mult,
            self.eta_min_frac,
        )
    }

    /// Multiplies every learning rate (including `base_lr` when set).
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            encoder_lr: self.encoder_lr * k,
            head_lr: self.head_lr * k,
            base_lr: self.base_lr.map(|b| b * k),
            ..self.clone()
        }
    }
}
