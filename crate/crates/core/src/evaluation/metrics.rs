use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores in [0, 1] paired with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape(
                "scored_set",
                format!("{} scores for {} labels", scores.len(), labels.len()),
            ));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score {s}")));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidArgument(format!("score {s} outside [0, 1]")));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidArgument(format!(
                "label must be 0 or 1, got {l}"
            )));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    fn require_both_classes(&self) -> Result<()> {
        let p = self.positives();
        if p == 0 || p == self.len() {
            return Err(Error::SingleClass(format!(
                "{p} positives and {} negatives; AUC needs both classes",
                self.len() - p
            )));
        }
        Ok(())
    }

    /// Scores split by class, each sorted ascending.
    pub(crate) fn sorted_by_class(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (&s, &l) in self.scores.iter().zip(&self.labels) {
            if l == 1 {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
        pos.sort_by(f64::total_cmp);
        neg.sort_by(f64::total_cmp);
        (pos, neg)
    }
}

/// Mann-Whitney AUC from midranks: ties between a positive and a
/// negative count one half.
pub fn roc_auc(set: &ScoredSet) -> Result<f64> {
    set.require_both_classes()?;
    let n = set.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));

    // Rank sums are kept doubled so tied groups stay integral.
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1, midrank (i + j + 2) / 2
        let midrank2 = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| set.labels[k] == 1).count() as u128;
        pos_rank_sum2 += midrank2 * pos_in_group;
        i = j + 1;
    }
    let p = set.positives() as u128;
    let q = (n as u128) - p;
    let u2 = pos_rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}

/// ROC points `(fpr, tpr)` at every distinct score, from (0, 0) to (1, 1).
pub fn roc_curve(set: &ScoredSet) -> Result<Vec<(f64, f64)>> {
    set.require_both_classes()?;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.scores[b].total_cmp(&set.scores[a]));
    let p = set.positives() as f64;
    let q = set.negatives() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut out = vec![(0.0, 0.0)];
    let mut i = 0;
    while i < order.len() {
        let s = set.scores[order[i]];
        while i < order.len() && set.scores[order[i]] == s {
            if set.labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((fp as f64 / q, tp as f64 / p));
    }
    Ok(out)
}

/// Counts and rates at one threshold. A rate whose denominator is zero
/// is reported as 0 and its name listed in `undefined`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

impl ConfusionMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let mut undefined = Vec::new();
        let mut ratio = |num: usize, den: usize, name: &str| {
            if den == 0 {
                undefined.push(name.to_string());
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let sensitivity = ratio(tp, tp + fn_, "sensitivity");
        let specificity = ratio(tn, tn + fp, "specificity");
        let precision = ratio(tp, tp + fp, "precision");
        let accuracy = ratio(tp + tn, tp + fp + tn + fn_, "accuracy");
        let f1 = if precision + sensitivity > 0.0 {
            2.0 * precision * sensitivity / (precision + sensitivity)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            tn,
            fn_,
            sensitivity,
            specificity,
            precision,
            f1,
            accuracy,
            undefined,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Predicts positive iff `score >= tau`.
pub fn confusion_at(set: &ScoredSet, tau: f64) -> ConfusionMetrics {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in set.scores.iter().zip(&set.labels) {
        match (s >= tau, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    ConfusionMetrics::from_counts(tp, fp, tn, fn_)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four() -> ScoredSet {
        ScoredSet::new(vec![0.1, 0.4, 0.35, 0.8], vec![0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn four_sample_auc() {
        assert_eq!(roc_auc(&four()).unwrap(), 0.75);
    }

    #[test]
    fn four_sample_confusion() {
        // 0.4 is a negative above 0.375, so it is a false positive there.
        let m = confusion_at(&four(), 0.375);
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (1, 1, 1, 1));
        assert_eq!(m.f1, 0.5);
        // Hand counts tp=1, fn=1, tn=2, fp=0 hold for tau in (0.4, 0.8].
        let m = confusion_at(&four(), 0.5);
        assert_eq!((m.tp, m.fn_, m.tn, m.fp), (1, 1, 2, 0));
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.sensitivity, 0.5);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_rates_are_flagged() {
        let set = ScoredSet::new(vec![0.2, 0.3], vec![0, 0]).unwrap();
        let m = confusion_at(&set, 0.5);
        assert_eq!(m.sensitivity, 0.0);
        assert!(m.undefined.contains(&"sensitivity".to_string()));
        assert!(m.undefined.contains(&"precision".to_string()));
        assert!(!m.undefined.contains(&"specificity".to_string()));
    }

    #[test]
    fn single_class_is_distinct_error() {
        let set = ScoredSet::new(vec![0.2, 0.3], vec![1, 1]).unwrap();
        assert!(matches!(roc_auc(&set), Err(Error::SingleClass(_))));
        assert!(matches!(roc_curve(&set), Err(Error::SingleClass(_))));
    }

    #[test]
    fn roc_curve_endpoints() {
        let c = roc_curve(&four()).unwrap();
        assert_eq!(c.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.last(), Some(&(1.0, 1.0)));
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ScoredSet::new(vec![0.1], vec![]).is_err());
        assert!(ScoredSet::new(vec![1.5], vec![1]).is_err());
        assert!(ScoredSet::new(vec![f64::NAN], vec![1]).is_err());
        assert!(ScoredSet::new(vec![0.5], vec![2]).is_err());
    }
}
