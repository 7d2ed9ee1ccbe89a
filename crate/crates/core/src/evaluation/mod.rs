//! Classification metrics, threshold calibration, operating modes and
//! the parametric cost model. All arithmetic is in `f64`.

mod calibration;
mod metrics;

pub use calibration::{
    calibrate, cost_savings, operating_report, sweep_threshold, CalibrationReport, CostParams,
    ModeThresholds, OperatingMode, Sweep, SweepConfig, SweepPoint, COST_FORMULA, MODE_NAMES,
};
pub use metrics::{confusion_at, roc_auc, roc_curve, ConfusionMetrics, ScoredSet};
