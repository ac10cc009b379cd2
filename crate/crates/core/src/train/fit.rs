use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{classes_present, derive_seed, macro_f1, predict_labels, streams, TrainConfig};
use crate::model::{Architecture, GraphInputs, Params};
use crate::tensor::{Adam, Real, Tape};

/// One graph with its label masks, ready for full-batch training.
#[derive(Debug, Clone)]
pub struct GraphTask<T: Real> {
    pub inputs: GraphInputs<T>,
    pub labels: Vec<Option<u8>>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl<T: Real> GraphTask<T> {
    fn targets(&self, rows: &[usize]) -> Vec<T> {
        rows.iter()
            .map(|&i| T::from_f64(f64::from(self.labels[i].expect("masked node is labeled"))))
            .collect()
    }

    fn truth(&self, rows: &[usize]) -> Vec<u8> {
        rows.iter().map(|&i| self.labels[i].expect("masked node is labeled")).collect()
    }

    /// Macro-F1 of `scores` restricted to `rows`.
    pub fn score(&self, scores: &[T], rows: &[usize]) -> f64 {
        let picked: Vec<T> = rows.iter().map(|&i| scores[i]).collect();
        macro_f1(&predict_labels(&picked), &self.truth(rows))
    }
}

/// Eval-mode Macro-F1 of `params` on `rows` of `task`.
pub fn evaluate<T: Real>(arch: &Architecture, params: &Params<T>, task: &GraphTask<T>, rows: &[usize]) -> f64 {
    let scores = arch.predict(params, &task.inputs);
    task.score(&scores, rows)
}

fn mean_val<T: Real>(arch: &Architecture, params: &Params<T>, tasks: &[&GraphTask<T>]) -> f64 {
    let total: f64 = tasks.iter().map(|t| evaluate(arch, params, t, &t.val)).sum();
    total / tasks.len() as f64
}

/// Best-so-far state frozen when one patience value triggers.
#[derive(Debug, Clone)]
pub struct Candidate<T: Real> {
    pub patience: usize,
    pub best_val: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub params: Params<T>,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub lr: f64,
    /// One per requested patience, in request order.
    pub candidates: Vec<Candidate<T>>,
    pub loss_trace: Vec<f64>,
    pub val_trace: Vec<f64>,
}

/// Run one learning rate to completion for every patience value at once.
///
/// All patience values share a trajectory until the smallest one triggers, so
/// one run serves the whole patience grid. Each epoch performs one full-batch
/// step per graph, visiting graphs in a fixed seeded order; validation is the
/// mean Macro-F1 over graphs. With `include_initial` the starting parameters
/// compete as epoch 0.
#[allow(clippy::too_many_arguments)]
pub fn train_trajectory<T: Real>(
    arch: &Architecture,
    tasks: &[&GraphTask<T>],
    init: &Params<T>,
    lr: f64,
    patiences: &[usize],
    max_epochs: usize,
    seed: u64,
    include_initial: bool,
) -> Trajectory<T> {
    assert!(!tasks.is_empty(), "no graphs to train on");
    let mut params = init.clone();
    let mut adam = Adam::new(lr);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, streams::DROPOUT));
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, streams::ORDER)));
    let targets: Vec<Vec<T>> = tasks.iter().map(|t| t.targets(&t.train)).collect();

    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_params = params.clone();
    let mut val_trace = Vec::new();
    if include_initial || max_epochs == 0 {
        best_val = mean_val(arch, &params, tasks);
        val_trace.push(best_val);
    }
    let mut done: Vec<Option<Candidate<T>>> = vec![None; patiences.len()];
    let mut loss_trace = Vec::new();
    let mut epoch = 0;
    while epoch < max_epochs && done.iter().any(Option::is_none) {
        epoch += 1;
        let mut loss_sum = 0.0;
        for &g in &order {
            let task = tasks[g];
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let s = arch.forward(&mut tape, &bound, &task.inputs, true, &mut drop_rng);
            let loss = tape.bce_loss(s, &task.train, &targets[g]);
            loss_sum += tape.value(loss)[[0, 0]].to_f64();
            let grads = tape.backward(loss).expect("bce loss is scalar");
            let g: Vec<Array2<T>> = bound
                .vars
                .iter()
                .zip(&params.tensors)
                .map(|(&v, t)| grads.get_or_zeros(v, t.dim()))
                .collect();
            adam.step(&mut params.tensors, &g);
        }
        loss_trace.push(loss_sum / tasks.len() as f64);
        let v = mean_val(arch, &params, tasks);
        val_trace.push(v);
        if v > best_val {
            best_val = v;
            best_epoch = epoch;
            best_params = params.clone();
        }
        for (slot, &p) in done.iter_mut().zip(patiences) {
            if slot.is_none() && epoch - best_epoch >= p {
                *slot = Some(Candidate {
                    patience: p,
                    best_val,
                    best_epoch,
                    epochs_run: epoch,
                    params: best_params.clone(),
                });
            }
        }
    }
    let candidates = done
        .into_iter()
        .zip(patiences)
        .map(|(slot, &p)| {
            slot.unwrap_or_else(|| Candidate {
                patience: p,
                best_val,
                best_epoch,
                epochs_run: epoch,
                params: best_params.clone(),
            })
        })
        .collect();
    Trajectory {
        lr,
        candidates,
        loss_trace,
        val_trace,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub lr: f64,
    pub patience: usize,
    pub val_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T: Real> {
    pub params: Params<T>,
    pub lr: f64,
    pub patience: usize,
    pub val_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Per-epoch train loss of the selected run, up to its stopping epoch.
    pub loss_trace: Vec<f64>,
    pub grid: Vec<GridEntry>,
}

/// Grid search over learning rate and patience, selecting by validation
/// Macro-F1. Ties keep the earlier grid entry.
pub fn fit<T: Real>(
    arch: &Architecture,
    tasks: &[&GraphTask<T>],
    init: &Params<T>,
    config: &TrainConfig,
    seed: u64,
    include_initial: bool,
) -> FitOutcome<T> {
    for (k, t) in tasks.iter().enumerate() {
        if classes_present(&t.train, &t.labels).len() < 2 {
            log::warn!("graph {k}: train mask holds a single class");
        }
    }
    let mut grid = Vec::new();
    let mut best: Option<FitOutcome<T>> = None;
    for &lr in &config.lrs {
        let traj = train_trajectory(
            arch,
            tasks,
            init,
            lr,
            &config.patiences,
            config.max_epochs,
            seed,
            include_initial,
        );
        for cand in traj.candidates {
            grid.push(GridEntry {
                lr,
                patience: cand.patience,
                val_f1: cand.best_val,
                best_epoch: cand.best_epoch,
                epochs_run: cand.epochs_run,
            });
            if best.as_ref().is_none_or(|b| cand.best_val > b.val_f1) {
                best = Some(FitOutcome {
                    lr,
                    patience: cand.patience,
                    val_f1: cand.best_val,
                    best_epoch: cand.best_epoch,
                    epochs_run: cand.epochs_run,
                    loss_trace: traj.loss_trace[..cand.epochs_run.min(traj.loss_trace.len())].to_vec(),
                    params: cand.params,
                    grid: Vec::new(),
                });
            }
        }
    }
    let mut out = best.expect("grid is non-empty");
    out.grid = grid;
    out
}
