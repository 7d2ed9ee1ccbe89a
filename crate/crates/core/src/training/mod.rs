//! Training loop, early stopping, stratified cross-validation and the
//! augmentation-regime ablation driver.

mod config;
mod cv;
mod early_stop;
mod history;
mod split;
mod trainer;

pub use config::{TrainConfig, TrainSetup};
pub use cv::{
    init_model, run_ablation, run_cv, AblationReport, AblationRow, CvReport, CvSummary, FoldResult,
    MeanSd, ABLATION_COLUMNS, CV_COLUMNS,
};
pub use early_stop::{EarlyStopping, StopUpdate};
pub use history::{EpochRecord, History, HISTORY_COLUMNS};
pub use split::{stratified_holdout, stratified_kfold, FoldSplit};
pub use trainer::{
    evaluate, stream_rng, train_one, LabeledImages, Stream, TrainOutcome, ValScores,
};
