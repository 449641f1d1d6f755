use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MsthError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Indices grouped by label (one group when unlabeled), each group shuffled.
fn shuffled_groups(n: usize, labels: Option<&[usize]>, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    match labels {
        Some(l) if l.len() != n => return Err(MsthError::shape(n, l.len())),
        Some(l) => {
            for (i, &y) in l.iter().enumerate() {
                groups.entry(y).or_default().push(i);
            }
        }
        None => {
            groups.insert(0, (0..n).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(groups
        .into_values()
        .map(|mut g| {
            g.shuffle(&mut rng);
            g
        })
        .collect())
}

/// Stratified k-fold split. Members of each class are dealt round-robin
/// across folds, continuing where the previous class stopped.
pub fn kfold_split(n: usize, k: usize, labels: Option<&[usize]>, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(MsthError::InvalidSplit(format!(
            "k must be at least 2, got {k}"
        )));
    }
    if k > n {
        return Err(MsthError::InvalidSplit(format!("k = {k} exceeds n = {n}")));
    }
    let mut assignment = vec![0usize; n];
    let mut pos = 0usize;
    for group in shuffled_groups(n, labels, seed)? {
        for i in group {
            assignment[i] = pos % k;
            pos += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            Fold { train, val }
        })
        .collect())
}

/// Stratified 70/15/15 train/validation/test split.
pub fn holdout_split(labels: &[usize], seed: u64) -> Result<HoldoutSplit> {
    if labels.len() < 3 {
        return Err(MsthError::InvalidSplit(format!(
            "need at least 3 samples, got {}",
            labels.len()
        )));
    }
    let mut split = HoldoutSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for group in shuffled_groups(labels.len(), Some(labels), seed)? {
        let n = group.len();
        let n_train = (0.70 * n as f64).round() as usize;
        let n_val = ((0.15 * n as f64).round() as usize).min(n - n_train);
        split.train.extend_from_slice(&group[..n_train]);
        split
            .val
            .extend_from_slice(&group[n_train..n_train + n_val]);
        split.test.extend_from_slice(&group[n_train + n_val..]);
    }
    if split.train.is_empty() || split.val.is_empty() {
        return Err(MsthError::InvalidSplit(
            "too few samples for a validation split".into(),
        ));
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// True when the best (highest) value is more than `patience` entries old.
pub fn early_stopping(history: &[f64], patience: usize) -> bool {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in history.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    match best {
        Some((i, _)) => history.len() - 1 - i > patience,
        None => false,
    }
}
