use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Cohort, DataError};
use crate::rng;

/// Participant-disjoint random train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Shuffles record indices with the seed and takes the first
/// `round(train_fraction * N)` as the training set. Both halves keep the
/// input's record order.
pub fn split_cohort(c: &Cohort, spec: &SplitSpec) -> Result<(Cohort, Cohort), DataError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DataError::BadFraction(spec.train_fraction));
    }
    let n = c.len();
    if n < 2 {
        return Err(DataError::TooFewRecords(n));
    }
    let n_train = (spec.train_fraction * n as f64).round() as usize;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(spec.seed));
    let (train, test) = idx.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();

    Ok((
        c.select(train, format!("split train (fraction {}, seed {})", spec.train_fraction, spec.seed)),
        c.select(test, format!("split test (fraction {}, seed {})", spec.train_fraction, spec.seed)),
    ))
}
