use serde::{Deserialize, Serialize};

use super::metrics::{confusion_at, roc_auc, roc_curve, ConfusionMetrics, ScoredSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lo: 0.1,
            hi: 0.9,
            step: 0.001,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lo) || !(0.0..=1.0).contains(&self.hi) || self.lo > self.hi {
            return Err(Error::Config(format!(
                "sweep range [{}, {}] invalid",
                self.lo, self.hi
            )));
        }
        if self.step.is_nan() || self.step <= 0.0 {
            return Err(Error::Config(format!(
                "sweep step must be positive, got {}",
                self.step
            )));
        }
        Ok(())
    }

    /// Grid `lo + i * step` for `i = 0 ..= round((hi - lo) / step)`.
    pub fn grid(&self) -> Vec<f64> {
        let steps = ((self.hi - self.lo) / self.step).round() as usize;
        (0..=steps)
            .map(|i| self.lo + i as f64 * self.step)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub tau_star: f64,
    pub f1_star: f64,
    pub curve: Vec<SweepPoint>,
}

fn count_at_least(sorted: &[f64], tau: f64) -> usize {
    sorted.len() - sorted.partition_point(|&s| s < tau)
}

/// F1-maximising threshold over the grid; the first (smallest) grid
/// value wins ties.
pub fn sweep_threshold(set: &ScoredSet, cfg: &SweepConfig) -> Result<Sweep> {
    cfg.validate()?;
    let (pos, neg) = set.sorted_by_class();
    let mut best = (cfg.lo, f64::NEG_INFINITY);
    let mut curve = Vec::new();
    for tau in cfg.grid() {
        let tp = count_at_least(&pos, tau);
        let fp = count_at_least(&neg, tau);
        let m = ConfusionMetrics::from_counts(tp, fp, neg.len() - fp, pos.len() - tp);
        if m.f1 > best.1 {
            best = (tau, m.f1);
        }
        curve.push(SweepPoint {
            tau,
            f1: m.f1,
            sensitivity: m.sensitivity,
            specificity: m.specificity,
            precision: m.precision,
        });
    }
    Ok(Sweep {
        tau_star: best.0,
        f1_star: best.1,
        curve,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    pub prevalence: f64,
    pub cost_missed_rupture: f64,
    pub cost_treatment: f64,
    pub cost_fp_workup: f64,
    pub cost_review: f64,
    pub cohort: u32,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            prevalence: 0.02,
            cost_missed_rupture: 800_000.0,
            cost_treatment: 50_000.0,
            cost_fp_workup: 2_000.0,
            cost_review: 0.0,
            cohort: 1000,
        }
    }
}

pub const COST_FORMULA: &str =
    "savings = cohort * (prevalence * sensitivity * (cost_missed_rupture - cost_treatment) \
     - (1 - prevalence) * (1 - specificity) * cost_fp_workup - cost_review)";

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::Config(format!(
                "cost.prevalence must lie in (0, 1), got {}",
                self.prevalence
            )));
        }
        for (name, v) in [
            ("cost_missed_rupture", self.cost_missed_rupture),
            ("cost_treatment", self.cost_treatment),
            ("cost_fp_workup", self.cost_fp_workup),
            ("cost_review", self.cost_review),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "cost.{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Net savings for `cost.cohort` patients at the given rates.
pub fn cost_savings(sensitivity: f64, specificity: f64, cost: &CostParams) -> f64 {
    let p = cost.prevalence;
    let per_patient = p * sensitivity * (cost.cost_missed_rupture - cost.cost_treatment)
        - (1.0 - p) * (1.0 - specificity) * cost.cost_fp_workup
        - cost.cost_review;
    cost.cohort as f64 * per_patient
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeThresholds {
    pub screening: f64,
    /// Used for the balanced row when no calibrated threshold is supplied.
    pub balanced: f64,
    pub diagnostic: f64,
}

impl Default for ModeThresholds {
    fn default() -> Self {
        Self {
            screening: 0.25,
            balanced: 0.391,
            diagnostic: 0.60,
        }
    }
}

impl ModeThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("screening", self.screening),
            ("balanced", self.balanced),
            ("diagnostic", self.diagnostic),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!(
                    "modes.{name} must lie in (0, 1), got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingMode {
    pub name: String,
    pub tau: f64,
    pub metrics: ConfusionMetrics,
    pub projected_savings: f64,
}

pub const MODE_NAMES: [&str; 3] = ["screening", "balanced", "diagnostic"];

pub fn operating_report(
    set: &ScoredSet,
    modes: &ModeThresholds,
    tau_star: Option<f64>,
    cost: &CostParams,
) -> Vec<OperatingMode> {
    let taus = [
        modes.screening,
        tau_star.unwrap_or(modes.balanced),
        modes.diagnostic,
    ];
    MODE_NAMES
        .iter()
        .zip(taus)
        .map(|(name, tau)| {
            let metrics = confusion_at(set, tau);
            let projected_savings = cost_savings(metrics.sensitivity, metrics.specificity, cost);
            OperatingMode {
                name: name.to_string(),
                tau,
                metrics,
                projected_savings,
            }
        })
        .collect()
}

/// Everything `calibrate` reports for one scored validation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub positives: usize,
    pub auc: f64,
    pub tau_star: f64,
    pub f1_star: f64,
    pub sweep: SweepConfig,
    pub modes: Vec<OperatingMode>,
    pub cost: CostParams,
    pub cost_formula: String,
    #[serde(skip)]
    pub curve: Vec<SweepPoint>,
    #[serde(skip)]
    pub roc: Vec<(f64, f64)>,
}

pub fn calibrate(
    set: &ScoredSet,
    sweep: &SweepConfig,
    modes: &ModeThresholds,
    cost: &CostParams,
) -> Result<CalibrationReport> {
    modes.validate()?;
    cost.validate()?;
    let auc = roc_auc(set)?;
    let roc = roc_curve(set)?;
    let s = sweep_threshold(set, sweep)?;
    Ok(CalibrationReport {
        n: set.len(),
        positives: set.positives(),
        auc,
        tau_star: s.tau_star,
        f1_star: s.f1_star,
        sweep: sweep.clone(),
        modes: operating_report(set, modes, Some(s.tau_star), cost),
        cost: cost.clone(),
        cost_formula: COST_FORMULA.to_string(),
        curve: s.curve,
        roc,
    })
}
