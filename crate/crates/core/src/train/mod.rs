//! Training harness: splits, metrics, the early-stopped fit loop with grid
//! search, label sparsification, multi-graph pretraining, baselines and the
//! experiment runners that produce reports.

mod baselines;
mod experiment;
mod fit;
mod report;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baselines::{
    eigenvector_centrality, node_pruning, select_threshold, Centrality, NodePruning, CENTRALITY_MAX_ITER,
    CENTRALITY_TOL,
};
pub use experiment::{
    ablation, baselines as run_baselines, evaluate_params, finetune, pretrain, scratch, sparsity_sweep,
    supervised, supervised_models, transfer, Prepared,
};
pub use fit::{evaluate, fit, train_trajectory, Candidate, FitOutcome, GraphTask, GridEntry, Trajectory};
pub use report::{ExperimentReport, GroupSummary, SeedResult};

use crate::error::{Error, Result};

pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.6, 0.2, 0.2);
pub const LR_GRID: [f64; 2] = [1e-2, 1e-3];
pub const PATIENCE_GRID: [usize; 3] = [20, 25, 30];
pub const SPARSITY_FRACTIONS: [f64; 7] = [0.001, 0.01, 0.05, 0.10, 0.25, 0.50, 1.0];
pub const MLP_LAYER_GRID: [usize; 3] = [2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lrs: Vec<f64>,
    pub patiences: Vec<usize>,
    pub max_epochs: usize,
    pub seeds: Vec<u64>,
    pub fractions: Vec<f64>,
    pub mlp_layers: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lrs: LR_GRID.to_vec(),
            patiences: PATIENCE_GRID.to_vec(),
            max_epochs: 1000,
            seeds: (0..5).collect(),
            fractions: SPARSITY_FRACTIONS.to_vec(),
            mlp_layers: MLP_LAYER_GRID.to_vec(),
        }
    }
}

impl TrainConfig {
    /// Check every grid value against the published grids.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: String| Err(Error::Config(format!("{what} {v} is outside the supported grid")));
        if self.lrs.is_empty() || self.patiences.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("lrs, patiences and seeds must be non-empty".into()));
        }
        for &lr in &self.lrs {
            if !LR_GRID.contains(&lr) {
                return bad("lr", lr.to_string());
            }
        }
        for &p in &self.patiences {
            if !PATIENCE_GRID.contains(&p) {
                return bad("patience", p.to_string());
            }
        }
        for &f in &self.fractions {
            if !SPARSITY_FRACTIONS.contains(&f) {
                return bad("fraction", f.to_string());
            }
        }
        for &l in &self.mlp_layers {
            if !MLP_LAYER_GRID.contains(&l) {
                return bad("mlp layer count", l.to_string());
            }
        }
        if self.max_epochs == 0 || self.max_epochs > 1000 {
            return bad("max_epochs", self.max_epochs.to_string());
        }
        Ok(())
    }
}

/// Disjoint train/val/test node masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub seed: u64,
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl SplitMasks {
    pub fn rows(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    pub fn train_rows(&self) -> Vec<usize> {
        Self::rows(&self.train)
    }

    pub fn val_rows(&self) -> Vec<usize> {
        Self::rows(&self.val)
    }

    pub fn test_rows(&self) -> Vec<usize> {
        Self::rows(&self.test)
    }
}

/// Seeded random 60/20/20 split: `⌊0.6n⌋` train, `⌊0.2n⌋` val, the rest test.
pub fn split(n: usize, seed: u64) -> Result<SplitMasks> {
    let all: Vec<usize> = (0..n).collect();
    split_nodes(n, &all, seed)
}

/// Split only the labeled nodes; unlabeled nodes land in no mask.
pub fn split_labeled(labels: &[Option<u8>], seed: u64) -> Result<SplitMasks> {
    let labeled: Vec<usize> = labels.iter().enumerate().filter(|(_, l)| l.is_some()).map(|(i, _)| i).collect();
    split_nodes(labels.len(), &labeled, seed)
}

fn split_nodes(n: usize, nodes: &[usize], seed: u64) -> Result<SplitMasks> {
    let m = nodes.len();
    if m < 5 {
        return Err(Error::Config(format!("need at least 5 labeled nodes to split, got {m}")));
    }
    let mut order = nodes.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (SPLIT_FRACTIONS.0 * m as f64).floor() as usize;
    let n_val = (SPLIT_FRACTIONS.1 * m as f64).floor() as usize;
    let mut masks = SplitMasks {
        seed,
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    };
    for (k, &i) in order.iter().enumerate() {
        if k < n_train {
            masks.train[i] = true;
        } else if k < n_train + n_val {
            masks.val[i] = true;
        } else {
            masks.test[i] = true;
        }
    }
    Ok(masks)
}

/// Prediction rule: IO iff score ≥ 0.5.
pub fn predict_labels<T: crate::tensor::Real>(scores: &[T]) -> Vec<u8> {
    scores.iter().map(|s| u8::from(s.to_f64() >= 0.5)).collect()
}

/// Unweighted mean of the two per-class F1 scores. A class whose F1
/// denominator is zero scores 0.
pub fn macro_f1(pred: &[u8], truth: &[u8]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "prediction/label length mismatch");
    let mut f1_sum = 0.0;
    for class in [0u8, 1] {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == class, t == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f1_sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    f1_sum / 2.0
}

/// Subsample the train rows to `max(2, round(fraction·|train|))` nodes.
///
/// The draw is a seeded permutation with the first positive and first
/// negative hoisted to the front, so masks are nested across fractions for
/// one seed and contain both classes whenever the train set does.
pub fn sparsify(train: &[usize], labels: &[Option<u8>], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !labels.contains(&Some(1)) {
        return Err(Error::NoPositives);
    }
    if fraction >= 1.0 {
        return Ok(train.to_vec());
    }
    let mut order = train.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut front = Vec::new();
    for class in [1u8, 0] {
        if let Some(pos) = order.iter().position(|&i| labels[i] == Some(class)) {
            front.push(order.remove(pos));
        }
    }
    front.extend(order);
    let k = ((fraction * train.len() as f64).round() as usize).max(2).min(train.len());
    let mut rows: Vec<usize> = front[..k].to_vec();
    rows.sort_unstable();
    Ok(rows)
}

/// Independent sub-seed for one purpose of a top-level seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub mod streams {
    pub const INIT: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const ORDER: u64 = 3;
    pub const SPARSIFY: u64 = 4;
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(crate) fn classes_present(rows: &[usize], labels: &[Option<u8>]) -> BTreeSet<u8> {
    rows.iter().filter_map(|&i| labels[i]).collect()
}
