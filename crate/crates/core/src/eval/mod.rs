//! Metrics, document-level cross-validation and significance tests.

mod experiment;
mod metrics;
mod ttest;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use experiment::{
    cross_validate, run_experiment, significance_stars, Comparison, CvOptions, ExperimentReport, Metric, ModelResult,
};
pub use metrics::{f1_score, precision_recall_f1, ConfusionCounts, EvalReport, LabelMetrics};
pub use ttest::{ln_gamma, paired_ttest, regularized_beta, student_t_two_sided, TTest};

/// Document indices for one train/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n_docs` and deals it into `k` contiguous folds; the
/// first `n_docs % k` folds get one extra document.
pub fn kfold_split(n_docs: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::config("k-fold needs k ≥ 2"));
    }
    if k > n_docs {
        return Err(Error::config(format!("k = {k} exceeds the {n_docs} available documents")));
    }
    let mut order: Vec<usize> = (0..n_docs).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n_docs / k;
    let extra = n_docs % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test = order[start..start + size].to_vec();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += size;
    }
    Ok(folds)
}
