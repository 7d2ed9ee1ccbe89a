use serde::{Deserialize, Serialize};

use crate::autodiff::{Float, Graph, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Label smoothing.
    pub epsilon: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 3.0,
            epsilon: 0.1,
        }
    }
}

impl FocalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "focal: alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "focal: gamma {} must be >= 0",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "focal: epsilon {} outside [0, 1)",
                self.epsilon
            )));
        }
        Ok(())
    }
}

pub const PROB_CLAMP: f64 = 1e-7;

/// Loss and `dL/dp` of one sample.
///
/// With smoothed target `t = y(1-ε) + ε/2`:
/// `L = -[α t (1-p)^γ ln p + (1-α)(1-t) p^γ ln(1-p)]`, with `p` clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn focal_term(p: f64, y: f64, params: &FocalParams) -> (f64, f64) {
    let FocalParams {
        alpha,
        gamma,
        epsilon,
    } = *params;
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let q = 1.0 - p;
    let t = y * (1.0 - epsilon) + epsilon / 2.0;
    let (lp, lq) = (p.ln(), q.ln());
    let (qg, pg) = (q.powf(gamma), p.powf(gamma));
    let loss = -(alpha * t * qg * lp + (1.0 - alpha) * (1.0 - t) * pg * lq);
    // γ·x^(γ-1) written so that γ = 0 never evaluates 0 · ∞
    let dqg = if gamma == 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0)
    };
    let dpg = if gamma == 0.0 {
        0.0
    } else {
        gamma * p.powf(gamma - 1.0)
    };
    let d_pos = -dqg * lp + qg / p;
    let d_neg = dpg * lq - pg / q;
    let grad = -(alpha * t * d_pos + (1.0 - alpha) * (1.0 - t) * d_neg);
    (loss, grad)
}

fn check_labels(labels: &[u8]) -> Result<()> {
    match labels.iter().find(|&&y| y > 1) {
        Some(y) => Err(Error::InvalidArgument(format!(
            "labels must be 0 or 1, got {y}"
        ))),
        None => Ok(()),
    }
}

/// Batch-mean focal loss.
pub fn smooth_focal_loss(probs: &[f64], labels: &[u8], params: &FocalParams) -> Result<f64> {
    check_labels(labels)?;
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::shape(
            "focal_loss",
            format!("{} probabilities for {} labels", probs.len(), labels.len()),
        ));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| focal_term(p, y as f64, params).0)
        .sum();
    Ok(total / probs.len() as f64)
}

/// Adds the batch-mean focal loss of the `N × 1` probability node `probs`
/// to the graph.
pub fn focal_loss_node<T: Float>(
    g: &mut Graph<T>,
    probs: Var,
    labels: &[u8],
    params: &FocalParams,
) -> Result<Var> {
    check_labels(labels)?;
    let p = g.value(probs).data();
    if p.len() != labels.len() {
        return Err(Error::shape(
            "focal_loss",
            format!("{} probabilities for {} labels", p.len(), labels.len()),
        ));
    }
    let (losses, grads): (Vec<T>, Vec<T>) = p
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let (l, d) = focal_term(p.as_f64(), y as f64, params);
            (T::of(l), T::of(d))
        })
        .unzip();
    g.mean_loss(probs, &losses, &grads)
}
