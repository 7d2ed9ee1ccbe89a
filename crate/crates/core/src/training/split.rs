use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fold index of every sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldSplit {
    /// `(train, held_out)` indices for fold `f`, each ascending.
    pub fn fold(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&i| self.assignment[i] != f)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

fn class_indices(labels: &[u8]) -> Result<[Vec<usize>; 2]> {
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        match l {
            0 | 1 => by_class[l as usize].push(i),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "label must be 0 or 1, got {other}"
                )))
            }
        }
    }
    Ok(by_class)
}

/// Within each class the indices are shuffled with `seed` and dealt
/// round-robin; dealing continues across classes (positives first) so
/// fold sizes also stay within one of each other.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k must be at least 2, got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [neg, pos] = class_indices(labels)?;
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for (name, mut members) in [("positive", pos), ("negative", neg)] {
        if members.len() < k {
            return Err(Error::InvalidArgument(format!(
                "{} {name} samples cannot fill {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldSplit { k, assignment })
}

/// Stratified `(train, val)` split holding out `round(fraction * n_c)`
/// of each class (at least one, at most `n_c - 1`).
pub fn stratified_holdout(
    labels: &[u8],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction {fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (name, mut members) in ["negative", "positive"]
        .into_iter()
        .zip(class_indices(labels)?)
    {
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 {name} samples for a holdout split, got {}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_val =
            ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}
