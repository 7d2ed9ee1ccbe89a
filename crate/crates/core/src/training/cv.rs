use serde::{Deserialize, Serialize};

use super::config::TrainSetup;
use super::split::{stratified_kfold, FoldSplit};
use super::trainer::{evaluate, stream_rng, train_one, LabeledImages, Stream};
use crate::error::{Error, Result};
use crate::evaluation::{confusion_at, sweep_threshold, ScoredSet};
use crate::imaging::{RegimeId, Sample};
use crate::model::{ParamGroup, Samm2dModel};
use crate::par::map_indices;
use crate::report::{csv_string, num};
use crate::synthgen::study_seed;

/// Freshly initialised model for `setup`, seeded from its init stream.
pub fn init_model(setup: &TrainSetup) -> Result<Samm2dModel<f32>> {
    Samm2dModel::new(
        setup.model.clone(),
        &mut stream_rng(setup.train.seed, Stream::Init),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub auc: f64,
    pub tau_star: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub augment_calls: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub auc: MeanSd,
    pub sensitivity: MeanSd,
    pub specificity: MeanSd,
    pub precision: MeanSd,
    pub f1: MeanSd,
}

impl CvSummary {
    pub fn of(folds: &[FoldResult]) -> Self {
        let col = |f: fn(&FoldResult) -> f64| MeanSd::of(&folds.iter().map(f).collect::<Vec<_>>());
        Self {
            auc: col(|r| r.auc),
            sensitivity: col(|r| r.sensitivity),
            specificity: col(|r| r.specificity),
            precision: col(|r| r.precision),
            f1: col(|r| r.f1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub regime: RegimeId,
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub summary: CvSummary,
}

pub const CV_COLUMNS: [&str; 14] = [
    "fold",
    "n_val",
    "best_epoch",
    "tau_star",
    "auc",
    "auc_sd",
    "sensitivity",
    "sensitivity_sd",
    "specificity",
    "specificity_sd",
    "precision",
    "precision_sd",
    "f1",
    "f1_sd",
];

impl CvReport {
    /// One row per fold followed by a `mean` row carrying the SDs.
    pub fn to_csv(&self, comments: &[String]) -> Result<String> {
        let mut rows: Vec<Vec<String>> = self
            .folds
            .iter()
            .map(|f| {
                let mut r = vec![
                    f.fold.to_string(),
                    f.n_val.to_string(),
                    f.best_epoch.to_string(),
                    num(f.tau_star),
                ];
                for v in [f.auc, f.sensitivity, f.specificity, f.precision, f.f1] {
                    r.push(num(v));
                    r.push(String::new());
                }
                r
            })
            .collect();
        let s = &self.summary;
        let mut agg = vec![
            "mean".to_string(),
            String::new(),
            String::new(),
            String::new(),
        ];
        for m in [s.auc, s.sensitivity, s.specificity, s.precision, s.f1] {
            agg.push(num(m.mean));
            agg.push(num(m.sd));
        }
        rows.push(agg);
        csv_string(comments, &CV_COLUMNS, &rows)
    }
}

fn run_fold(
    samples: &[Sample],
    split: &FoldSplit,
    fold: usize,
    setup: &TrainSetup,
) -> Result<FoldResult> {
    let (tr_idx, va_idx) = split.fold(fold);
    let train = LabeledImages::select(samples, &tr_idx)?;
    let val = LabeledImages::select(samples, &va_idx)?;
    let mut fold_setup = setup.clone();
    fold_setup.train.seed = study_seed(setup.train.seed, fold as u64);
    let mut model = init_model(&fold_setup)?;
    let outcome = train_one(&mut model, &train, &val, &fold_setup)?;
    let scores = evaluate(&outcome.best, &val, &fold_setup)?;
    let set = ScoredSet::new(
        scores.probs.iter().map(|p| p.clamp(0.0, 1.0)).collect(),
        val.labels.clone(),
    )?;
    let tau_star = sweep_threshold(&set, &setup.sweep)?.tau_star;
    let m = confusion_at(&set, tau_star);
    Ok(FoldResult {
        fold,
        n_train: train.len(),
        n_val: val.len(),
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
        auc: scores.auc,
        tau_star,
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        precision: m.precision,
        f1: m.f1,
        augment_calls: outcome.augment_calls,
    })
}

/// Stratified k-fold cross-validation. The held-out fold is both the
/// early-stopping set and the calibration set; fold metrics are taken at
/// the fold's own F1-optimal threshold.
pub fn run_cv(samples: &[Sample], setup: &TrainSetup) -> Result<CvReport> {
    setup.validate()?;
    let labels = labels_of(samples)?;
    let k = setup.train.folds;
    let split = stratified_kfold(&labels, k, setup.train.seed)?;
    let folds = map_indices(k, |f| run_fold(samples, &split, f, setup))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport {
        regime: setup.train.regime,
        k,
        summary: CvSummary::of(&folds),
        folds,
    })
}

fn labels_of(samples: &[Sample]) -> Result<Vec<u8>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.label
                .map(|l| l.bit())
                .ok_or_else(|| Error::Data(format!("sample {i} has no label")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub regime: RegimeId,
    pub description: String,
    pub auc_mean: f64,
    pub auc_sd: f64,
    pub recall_mean: f64,
    pub recall_sd: f64,
    pub encoder_lr: f64,
    pub head_lr: f64,
    pub focal_gamma: f64,
    pub augment_calls: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub cv: Vec<CvReport>,
}

pub const ABLATION_COLUMNS: [&str; 10] = [
    "regime",
    "description",
    "auc_mean",
    "auc_sd",
    "recall_mean",
    "recall_sd",
    "encoder_lr",
    "head_lr",
    "focal_gamma",
    "augment_calls",
];

impl AblationReport {
    pub fn to_csv(&self, comments: &[String]) -> Result<String> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.regime.code().to_string(),
                    r.description.clone(),
                    num(r.auc_mean),
                    num(r.auc_sd),
                    num(r.recall_mean),
                    num(r.recall_sd),
                    num(r.encoder_lr),
                    num(r.head_lr),
                    num(r.focal_gamma),
                    r.augment_calls.to_string(),
                ]
            })
            .collect();
        csv_string(comments, &ABLATION_COLUMNS, &rows)
    }
}

/// One cross-validation per regime over the same folds; only the
/// regime's own deltas differ between rows.
pub fn run_ablation(
    samples: &[Sample],
    setup: &TrainSetup,
    regimes: &[RegimeId],
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(regimes.len());
    let mut cv = Vec::with_capacity(regimes.len());
    for &regime in regimes {
        let s = setup.for_regime(regime);
        let report = run_cv(samples, &s)?;
        let optim = s.effective_optim();
        rows.push(AblationRow {
            regime,
            description: regime.description().to_string(),
            auc_mean: report.summary.auc.mean,
            auc_sd: report.summary.auc.sd,
            recall_mean: report.summary.sensitivity.mean,
            recall_sd: report.summary.sensitivity.sd,
            encoder_lr: optim.group_lr(ParamGroup::Encoder1),
            head_lr: optim.group_lr(ParamGroup::Head),
            focal_gamma: s.effective_focal().gamma,
            augment_calls: report.folds.iter().map(|f| f.augment_calls).sum(),
        });
        cv.push(report);
    }
    Ok(AblationReport { rows, cv })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_sd() {
        let m = MeanSd::of(&[0.6, 0.8]);
        assert!((m.mean - 0.7).abs() < 1e-12);
        assert!((m.sd - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(MeanSd::of(&[0.5, 0.5]).sd, 0.0);
    }
}
