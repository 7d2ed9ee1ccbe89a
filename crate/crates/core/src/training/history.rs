use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::report::{csv_string, num};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// Absent on epochs without a validation pass.
    pub val_loss: Option<f64>,
    pub val_auc: Option<f64>,
    /// Effective learning rates at the start of the epoch.
    pub lr_encoder: f64,
    pub lr_head: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

pub const HISTORY_COLUMNS: [&str; 7] = [
    "epoch",
    "train_loss",
    "train_acc",
    "val_loss",
    "val_auc",
    "lr_encoder",
    "lr_head",
];

impl History {
    pub fn push(&mut self, r: EpochRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn best_val(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .filter(|r| r.val_loss.is_some())
            .min_by(|a, b| a.val_loss.unwrap().total_cmp(&b.val_loss.unwrap()))
    }

    pub fn to_csv(&self, comments: &[String]) -> Result<String> {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let rows: Vec<Vec<String>> = self
            .records
            .iter()
            .map(|r| {
                vec![
                    r.epoch.to_string(),
                    num(r.train_loss),
                    num(r.train_acc),
                    opt(r.val_loss),
                    opt(r.val_auc),
                    num(r.lr_encoder),
                    num(r.lr_head),
                ]
            })
            .collect();
        csv_string(comments, &HISTORY_COLUMNS, &rows)
    }
}
