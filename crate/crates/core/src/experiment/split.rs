//! Subject-stratified k-fold splits.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::{Error, Result};

/// Train/validation/test trial indices of one fold, grouped by subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub fold: usize,
    pub train: Vec<Vec<usize>>,
    pub validation: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
}

impl SplitPlan {
    pub fn train_indices(&self) -> Vec<usize> {
        self.train.concat()
    }

    pub fn validation_indices(&self) -> Vec<usize> {
        self.validation.concat()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.test.concat()
    }
}

/// Per subject, shuffles the trials once and cuts `k` contiguous test
/// blocks of `floor(n / k)` trials. The remainder of each fold keeps the
/// shuffled order; its last `floor(remainder / 8)` trials validate and the
/// rest train, so 100 trials give 70:10:20.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    kfold_groups(&dataset.subject_indices(), k, seed)
}

pub(crate) fn kfold_groups(groups: &[Vec<usize>], k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = Vec::with_capacity(groups.len());
    for (s, group) in groups.iter().enumerate() {
        let n = group.len();
        let block = n / k;
        if block == 0 || (n - block) / 8 == 0 {
            return Err(Error::InvalidParameter(format!(
                "subject {s} has {n} trials, too few for {k} folds with a validation split"
            )));
        }
        let mut g = group.clone();
        g.shuffle(&mut rng);
        shuffled.push(g);
    }
    let plans = (0..k)
        .map(|fold| {
            let mut plan = SplitPlan {
                fold,
                train: Vec::new(),
                validation: Vec::new(),
                test: Vec::new(),
            };
            for g in &shuffled {
                let block = g.len() / k;
                let test = &g[fold * block..(fold + 1) * block];
                let rest: Vec<usize> = g[..fold * block]
                    .iter()
                    .chain(&g[(fold + 1) * block..])
                    .copied()
                    .collect();
                let n_val = rest.len() / 8;
                let (train, val) = rest.split_at(rest.len() - n_val);
                plan.train.push(train.to_vec());
                plan.validation.push(val.to_vec());
                plan.test.push(test.to_vec());
            }
            plan
        })
        .collect();
    Ok(plans)
}

/// Splits each subject's trials into validation (last `floor(n / 8)` of a
/// seeded shuffle) and training.
pub(crate) fn holdout_validation(
    groups: &[Vec<usize>],
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (s, group) in groups.iter().enumerate() {
        let mut g = group.clone();
        g.shuffle(&mut rng);
        let n_val = g.len() / 8;
        if n_val == 0 {
            return Err(Error::InvalidParameter(format!(
                "subject {s} has {} training trials, too few for a validation split",
                g.len()
            )));
        }
        let (t, v) = g.split_at(g.len() - n_val);
        train.extend_from_slice(t);
        val.extend_from_slice(v);
    }
    Ok((train, val))
}
