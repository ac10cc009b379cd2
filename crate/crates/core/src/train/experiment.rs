use ndarray::Array2;
use rayon::prelude::*;

use super::baselines::{eigenvector_centrality, node_pruning};
use super::fit::{evaluate, fit, FitOutcome, GraphTask};
use super::{derive_seed, sparsify, split_labeled, streams, SeedResult, SplitMasks, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{Ablation, Architecture, GraphInputs, MlpConfig, ModelConfig, NormalizedAdjacency, Params};
use crate::simnet::FusedNetwork;

/// A dataset with its fused network and feature matrices built.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub labels: Vec<Option<u8>>,
    pub network: FusedNetwork,
    pub adjacency: NormalizedAdjacency,
    /// Per-user content embeddings, `n × d_c`.
    pub content: Array2<f32>,
    /// Degree one-hots, `n × d_g`.
    pub context: Array2<f32>,
    /// Content of each user's top-5 most popular posts, for the MLP baseline.
    pub content_top5: Array2<f32>,
}

impl Prepared {
    pub fn d_c(&self) -> usize {
        self.content.ncols()
    }

    pub fn d_g(&self) -> usize {
        self.context.ncols()
    }

    fn task_with(&self, content: &Array2<f32>, masks: &SplitMasks) -> GraphTask<f32> {
        GraphTask {
            inputs: GraphInputs::new(content, &self.context, &self.adjacency),
            labels: self.labels.clone(),
            train: masks.train_rows(),
            val: masks.val_rows(),
            test: masks.test_rows(),
        }
    }

    pub fn task(&self, masks: &SplitMasks) -> GraphTask<f32> {
        self.task_with(&self.content, masks)
    }

    pub fn mlp_task(&self, masks: &SplitMasks) -> GraphTask<f32> {
        self.task_with(&self.content_top5, masks)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.d_c(), self.d_g())
    }
}

fn record(variant: &str, fraction: f64, seed: u64, out: &FitOutcome<f32>, test: f64) -> SeedResult {
    let mut r = SeedResult::new(variant, fraction, seed, out.val_f1, test);
    r.lr = Some(out.lr);
    r.patience = Some(out.patience);
    r.best_epoch = Some(out.best_epoch);
    r.epochs_run = Some(out.epochs_run);
    r
}

fn fit_and_test(
    arch: &Architecture,
    task: &GraphTask<f32>,
    init: &Params<f32>,
    cfg: &TrainConfig,
    seed: u64,
    include_initial: bool,
) -> (FitOutcome<f32>, f64) {
    let out = fit(arch, &[task], init, cfg, seed, include_initial);
    let test = evaluate(arch, &out.params, task, &task.test);
    (out, test)
}

/// Full-label training of `arch` for every seed, keeping each seed's
/// selected parameters.
pub fn supervised_models(
    prep: &Prepared,
    arch: &Architecture,
    cfg: &TrainConfig,
    variant: &str,
) -> Result<Vec<(SeedResult, Params<f32>)>> {
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let masks = split_labeled(&prep.labels, seed)?;
            let task = prep.task(&masks);
            let init = arch.init(derive_seed(seed, streams::INIT));
            let (out, test) = fit_and_test(arch, &task, &init, cfg, seed, false);
            let r = record(variant, 1.0, seed, &out, test);
            Ok((r, out.params))
        })
        .collect()
}

/// Full-label training of `arch` for every seed.
pub fn supervised(prep: &Prepared, arch: &Architecture, cfg: &TrainConfig, variant: &str) -> Result<Vec<SeedResult>> {
    Ok(supervised_models(prep, arch, cfg, variant)?.into_iter().map(|(r, _)| r).collect())
}

/// Score fixed `params` on every seed's validation and test masks.
pub fn evaluate_params(
    prep: &Prepared,
    arch: &Architecture,
    params: &Params<f32>,
    cfg: &TrainConfig,
    variant: &str,
) -> Result<Vec<SeedResult>> {
    cfg.seeds
        .iter()
        .map(|&seed| {
            let masks = split_labeled(&prep.labels, seed)?;
            let task = prep.task(&masks);
            let val = evaluate(arch, params, &task, &task.val);
            let test = evaluate(arch, params, &task, &task.test);
            Ok(SeedResult::new(variant, 1.0, seed, val, test))
        })
        .collect()
}

/// One run per (seed, fraction) on nested sparsified train masks.
pub fn sparsity_sweep(prep: &Prepared, arch: &Architecture, cfg: &TrainConfig, variant: &str) -> Result<Vec<SeedResult>> {
    let jobs: Vec<(u64, f64)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.fractions.iter().map(move |&f| (s, f)))
        .collect();
    jobs.par_iter()
        .map(|&(seed, fraction)| {
            let masks = split_labeled(&prep.labels, seed)?;
            let mut task = prep.task(&masks);
            task.train = sparsify(&task.train, &prep.labels, fraction, derive_seed(seed, streams::SPARSIFY))?;
            let init = arch.init(derive_seed(seed, streams::INIT));
            let (out, test) = fit_and_test(arch, &task, &init, cfg, seed, false);
            Ok(record(variant, fraction, seed, &out, test))
        })
        .collect()
}

/// Every fusion variant of `model` on the same splits.
pub fn ablation(prep: &Prepared, model: &ModelConfig, cfg: &TrainConfig) -> Result<Vec<SeedResult>> {
    let mut runs = Vec::new();
    for ab in Ablation::ALL {
        let arch = Architecture::IoHunter(ModelConfig { ablation: ab, ..*model });
        runs.extend(supervised(prep, &arch, cfg, ab.name())?);
    }
    Ok(runs)
}

/// Centrality-threshold and content-MLP baselines for every seed.
pub fn baselines(prep: &Prepared, cfg: &TrainConfig) -> Result<Vec<SeedResult>> {
    let centrality = eigenvector_centrality(&prep.network);
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let masks = split_labeled(&prep.labels, seed)?;
        let np = node_pruning(&centrality, &prep.labels, &masks.val_rows(), &masks.test_rows());
        let mut r = SeedResult::new("node_pruning", 1.0, seed, np.val_f1, np.test_f1);
        r.threshold = Some(np.threshold);
        runs.push(r);
    }
    let mlp: Vec<SeedResult> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let masks = split_labeled(&prep.labels, seed)?;
            let task = prep.mlp_task(&masks);
            let mut best: Option<(FitOutcome<f32>, f64, usize)> = None;
            for &layers in &cfg.mlp_layers {
                let arch = Architecture::ContentMlp(MlpConfig {
                    layers,
                    hidden: 128,
                    dropout: 0.2,
                    d_in: prep.d_c(),
                });
                let init = arch.init(derive_seed(seed, streams::INIT));
                let (out, test) = fit_and_test(&arch, &task, &init, cfg, seed, false);
                if best.as_ref().is_none_or(|b| out.val_f1 > b.0.val_f1) {
                    best = Some((out, test, layers));
                }
            }
            let (out, test, layers) = best.ok_or_else(|| Error::Config("empty MLP layer grid".into()))?;
            let mut r = record("content_mlp", 1.0, seed, &out, test);
            r.layers = Some(layers);
            Ok(r)
        })
        .collect::<Result<_>>()?;
    runs.extend(mlp);
    Ok(runs)
}

/// Train one model on several graphs at once (full train masks of each).
pub fn pretrain(sources: &[&Prepared], arch: &Architecture, cfg: &TrainConfig, seed: u64) -> Result<FitOutcome<f32>> {
    let first = sources.first().ok_or_else(|| Error::Config("no pretraining graphs".into()))?;
    for s in sources {
        if s.d_c() != first.d_c() || s.d_g() != first.d_g() {
            return Err(Error::Signature {
                ckpt_dc: first.d_c(),
                ckpt_dg: first.d_g(),
                data_dc: s.d_c(),
                data_dg: s.d_g(),
            });
        }
    }
    let tasks: Vec<GraphTask<f32>> = sources
        .iter()
        .map(|s| split_labeled(&s.labels, seed).map(|m| s.task(&m)))
        .collect::<Result<_>>()?;
    let refs: Vec<&GraphTask<f32>> = tasks.iter().collect();
    let init = arch.init(derive_seed(seed, streams::INIT));
    Ok(fit(arch, &refs, &init, cfg, seed, false))
}

/// Evaluate pretrained `params` on the target untouched, then fine-tune all
/// of them on a sparsified target train mask. Returns the "only_pretrain"
/// and "finetune" rows.
pub fn finetune(
    params: &Params<f32>,
    arch: &Architecture,
    target: &Prepared,
    cfg: &TrainConfig,
    fraction: f64,
    seed: u64,
) -> Result<(SeedResult, SeedResult)> {
    let masks = split_labeled(&target.labels, seed)?;
    let mut task = target.task(&masks);
    task.train = sparsify(&task.train, &target.labels, fraction, derive_seed(seed, streams::SPARSIFY))?;
    let only_val = evaluate(arch, params, &task, &task.val);
    let only_test = evaluate(arch, params, &task, &task.test);
    let only = SeedResult::new("only_pretrain", fraction, seed, only_val, only_test);
    let (out, test) = fit_and_test(arch, &task, params, cfg, seed, true);
    Ok((only, record("finetune", fraction, seed, &out, test)))
}

/// Train from a fresh init on `fraction` of the target's train labels.
pub fn scratch(arch: &Architecture, target: &Prepared, cfg: &TrainConfig, fraction: f64, seed: u64) -> Result<SeedResult> {
    let masks = split_labeled(&target.labels, seed)?;
    let mut task = target.task(&masks);
    task.train = sparsify(&task.train, &target.labels, fraction, derive_seed(seed, streams::SPARSIFY))?;
    let init = arch.init(derive_seed(seed, streams::INIT));
    let (out, test) = fit_and_test(arch, &task, &init, cfg, seed, false);
    Ok(record("scratch", fraction, seed, &out, test))
}

/// Leave-one-out transfer: for each seed, pretrain on `sources`, then report
/// scratch training, the untouched pretrained model and fine-tuning on the
/// target at `fraction` of its train labels.
pub fn transfer(
    sources: &[&Prepared],
    target: &Prepared,
    arch: &Architecture,
    cfg: &TrainConfig,
    fraction: f64,
) -> Result<Vec<SeedResult>> {
    let per_seed: Vec<Vec<SeedResult>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let pre = pretrain(sources, arch, cfg, seed)?;
            let (only, ft) = finetune(&pre.params, arch, target, cfg, fraction, seed)?;
            Ok(vec![scratch(arch, target, cfg, fraction, seed)?, only, ft])
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}
