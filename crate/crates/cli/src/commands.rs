use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use iohunter::features::{degree_one_hot, write_user_embeddings};
use iohunter::model::{load_checkpoint, save_checkpoint, Architecture, Checkpoint, NormalizedAdjacency};
use iohunter::pipeline::{content_tables, prepare, PipelineConfig};
use iohunter::simnet::{degrees, edge_homophily, FusedNetwork};
use iohunter::synth::generate;
use iohunter::trace::{build_bundle, parse_traces, write_labels_csv, write_traces_jsonl, DatasetBundle, TraceFormat};
use iohunter::train::{
    ablation, evaluate_params, finetune, pretrain, run_baselines, scratch, sparsity_sweep, supervised_models,
    ExperimentReport, Prepared, SeedResult,
};

use crate::artifacts::{is_cached, publish, require, stage_dir, Manifest};
use crate::config::{file_digest, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    BuildNet,
    Embed,
    Train,
    Eval,
    SweepSparsity,
    Pretrain,
    Finetune,
    Ablate,
    Baseline,
    Synth,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::BuildNet => "build-net",
            Command::Embed => "embed",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::SweepSparsity => "sweep-sparsity",
            Command::Pretrain => "pretrain",
            Command::Finetune => "finetune",
            Command::Ablate => "ablate",
            Command::Baseline => "baseline",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }
}

/// Everything a command needs besides the config file.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub checkpoint: Option<PathBuf>,
    pub force: bool,
    /// `report` inputs: report files or directories holding `report.json`.
    pub reports: Vec<PathBuf>,
}

/// Run `command` and return the artifact directory.
pub fn run(command: Command, cfg: &RunConfig, inv: &Invocation) -> Result<PathBuf, CliError> {
    if command != Command::Report {
        cfg.validate()?;
    }
    match command {
        Command::Synth => synth(cfg),
        Command::Ingest => ingest(cfg),
        Command::BuildNet => build_net(cfg),
        Command::Embed => embed(cfg),
        Command::Train => train(cfg),
        Command::Eval => eval(cfg, inv),
        Command::SweepSparsity => experiment(cfg, Command::SweepSparsity),
        Command::Ablate => experiment(cfg, Command::Ablate),
        Command::Baseline => experiment(cfg, Command::Baseline),
        Command::Pretrain => pretrain_cmd(cfg),
        Command::Finetune => finetune_cmd(cfg, inv),
        Command::Report => report(cfg, inv),
    }
}

fn manifest(command: Command, fingerprint: &str, cfg: &RunConfig) -> Manifest {
    Manifest {
        command: command.name().into(),
        fingerprint: fingerprint.into(),
        config: cfg.canonical(),
        inputs: Default::default(),
        outputs: Default::default(),
    }
}

fn cached(dir: &Path, fingerprint: &str) -> bool {
    let hit = is_cached(dir, fingerprint);
    if hit {
        log::info!("reusing {}", dir.display());
    }
    hit
}

fn synth(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let fp = cfg.data_fingerprint()?;
    let dir = stage_dir(&cfg.out, Command::Synth.name(), &fp);
    if cached(&dir, &fp) {
        return Ok(dir);
    }
    let sc = cfg.synth_config()?;
    let bundle = generate(&sc)?;
    publish(&dir, |tmp| {
        write_traces_jsonl(&tmp.join("traces.jsonl"), &bundle.records)?;
        write_labels_csv(&tmp.join("labels.csv"), &bundle.labels)?;
        let mut m = manifest(Command::Synth, &fp, cfg);
        m.inputs.insert("synth".into(), serde_json::to_value(&sc)?);
        m.outputs.insert("users".into(), bundle.num_users().into());
        m.outputs.insert("io_users".into(), bundle.io_count().into());
        m.outputs.insert("records".into(), bundle.records.len().into());
        Ok(m)
    })?;
    Ok(dir)
}

/// Trace and label files of the configured source.
fn source_files(cfg: &RunConfig) -> Result<(PathBuf, PathBuf), CliError> {
    match (&cfg.data.traces, &cfg.data.labels) {
        (Some(t), Some(l)) => Ok((t.clone(), l.clone())),
        _ => {
            let dir = stage_dir(&cfg.out, Command::Synth.name(), &cfg.data_fingerprint()?);
            Ok((dir.join("traces.jsonl"), dir.join("labels.csv")))
        }
    }
}

fn load_bundle(cfg: &RunConfig) -> Result<DatasetBundle, CliError> {
    let (traces, labels) = source_files(cfg)?;
    require(&traces)?;
    require(&labels)?;
    let parsed = parse_traces(&traces, TraceFormat::from_path(&traces))?;
    if !parsed.malformed_lines.is_empty() {
        log::warn!(
            "skipped {} malformed lines in {}",
            parsed.malformed_lines.len(),
            traces.display()
        );
    }
    let name = cfg
        .data
        .preset
        .clone()
        .unwrap_or_else(|| traces.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    Ok(build_bundle(parsed.records, &labels, &name, false)?)
}

fn ingest(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let fp = cfg.data_fingerprint()?;
    let dir = stage_dir(&cfg.out, Command::Ingest.name(), &fp);
    if cached(&dir, &fp) {
        return Ok(dir);
    }
    let bundle = load_bundle(cfg)?;
    publish(&dir, |tmp| {
        bundle.write_json(&tmp.join("bundle.json"))?;
        let mut m = manifest(Command::Ingest, &fp, cfg);
        m.outputs.insert("users".into(), bundle.num_users().into());
        m.outputs.insert("io_users".into(), bundle.io_count().into());
        m.outputs.insert("records".into(), bundle.records.len().into());
        Ok(m)
    })?;
    Ok(dir)
}

fn pipeline_config(cfg: &RunConfig) -> PipelineConfig {
    PipelineConfig {
        network: cfg.network.clone(),
        features: cfg.features.clone(),
    }
}

fn build_net(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let fp = cfg.network_fingerprint()?;
    let dir = stage_dir(&cfg.out, Command::BuildNet.name(), &fp);
    if cached(&dir, &fp) {
        return Ok(dir);
    }
    let bundle = load_bundle(cfg)?;
    let built = prepare(&bundle, &pipeline_config(cfg), cfg.data.embeddings.as_deref())?;
    let labels = bundle.label_vec();
    let fused = &built.prepared.network;
    let h = edge_homophily(fused, &labels)?;
    let layers: Vec<serde_json::Value> = built
        .layers
        .iter()
        .map(|l| json!({"kind": l.kind.name(), "edges": l.edge_count()}))
        .collect();
    publish(&dir, |tmp| {
        fused.write_csv(&tmp.join("fused.csv"))?;
        let mut m = manifest(Command::BuildNet, &fp, cfg);
        m.outputs.insert("nodes".into(), fused.n.into());
        m.outputs.insert("edges".into(), fused.edge_count().into());
        m.outputs.insert("homophily".into(), h.edge.into());
        m.outputs.insert("class_insensitive_homophily".into(), h.class_insensitive.into());
        m.outputs.insert("layers".into(), layers.into());
        m.outputs.insert("missing_embeddings".into(), built.missing_embeddings.into());
        Ok(m)
    })?;
    Ok(dir)
}

fn embed(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let fp = cfg.network_fingerprint()?;
    let dir = stage_dir(&cfg.out, Command::Embed.name(), &fp);
    if cached(&dir, &fp) {
        return Ok(dir);
    }
    let bundle = load_bundle(cfg)?;
    let (content, top5, missing) = content_tables(&bundle, &cfg.features, cfg.data.embeddings.as_deref())?;
    publish(&dir, |tmp| {
        write_user_embeddings(&tmp.join("content.ioem"), &bundle, &content)?;
        write_user_embeddings(&tmp.join("content_top5.ioem"), &bundle, &top5)?;
        let mut m = manifest(Command::Embed, &fp, cfg);
        let source = if cfg.data.embeddings.is_some() { "imported" } else { "hashed_fallback" };
        m.outputs.insert("source".into(), source.into());
        m.outputs.insert("d_c".into(), content.dim().into());
        m.outputs.insert("users".into(), bundle.num_users().into());
        m.outputs.insert("missing_users".into(), missing.into());
        Ok(m)
    })?;
    Ok(dir)
}

/// Bundle plus the fused network from the `build-net` artifact.
fn load_prepared(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let net_dir = stage_dir(&cfg.out, Command::BuildNet.name(), &cfg.network_fingerprint()?);
    let fused_path = net_dir.join("fused.csv");
    require(&fused_path)?;
    let bundle = load_bundle(cfg)?;
    let network = FusedNetwork::read_csv(&fused_path, bundle.num_users())?;
    let (content, top5, _) = content_tables(&bundle, &cfg.features, cfg.data.embeddings.as_deref())?;
    let context = degree_one_hot(&degrees(&network), cfg.features.d_g, cfg.features.buckets)?;
    let adjacency = NormalizedAdjacency::from_network(&network);
    Ok(Prepared {
        name: bundle.name.clone(),
        labels: bundle.label_vec(),
        network,
        adjacency,
        content: content.vectors,
        context,
        content_top5: top5.vectors,
    })
}

/// A synthetic preset prepared in memory (transfer sources and target).
fn prepared_preset(cfg: &RunConfig, name: &str) -> Result<Prepared, CliError> {
    let bundle = generate(&cfg.synth_for(name)?)?;
    let mut p = prepare(&bundle, &pipeline_config(cfg), None)?.prepared;
    p.name = name.to_string();
    Ok(p)
}

fn write_report(
    dir: &Path,
    command: Command,
    fp: &str,
    cfg: &RunConfig,
    runs: Vec<SeedResult>,
    started: Instant,
    extra: impl FnOnce(&Path, &mut Manifest) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut report = ExperimentReport::new(command.name(), fp, cfg.canonical(), runs);
    report.wall_time_secs = Some(started.elapsed().as_secs_f64());
    publish(dir, |tmp| {
        report.write(tmp)?;
        let mut m = manifest(command, fp, cfg);
        extra(tmp, &mut m)?;
        Ok(m)
    })
}

fn train(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let fp = cfg.fingerprint(&[])?;
    let dir = stage_dir(&cfg.out, Command::Train.name(), &fp);
    if cached(&dir, &fp) {
        return Ok(dir);
    }
    let started = Instant::now();
    let prep = load_prepared(cfg)?;
    let model = cfg.model_config(prep.d_c(), prep.d_g());
    let arch = Architecture::IoHunter(model);
    let results = supervised_models(&prep, &arch, &cfg.train_config(), model.ablation.name())?;
    let runs: Vec<SeedResult> = results.iter().map(|(r, _)| r.clone()).collect();
    write_report(&dir, Command::Train, &fp, cfg, runs, started, |tmp, m| {
        for (r, params) in &results {
            let name = format!("model_seed{}.iock", r.seed);
            save_checkpoint(&tmp.join(&name), &model, params)?;
            m.outputs.insert(format!("checkpoint_seed{}", r.seed), name.into());
        }
        Ok(())
    })?;
    Ok(dir)
}

fn load_checked(path: &Path, prep: &Prepared) -> Result<Checkpoint, CliError> {
    require(path)?;
    let ckpt = load_checkpoint(path)?;
    ckpt.ensure_signature(prep.d_c(), prep.d_g())?;
    Ok(ckpt)
}

fn eval(cfg: &RunConfig, inv: &Invocation) -> Result<PathBuf, CliError> {
    let path = inv
        .checkpoint
        .as_deref()
        .ok_or_else(|| CliError::Validation("eval needs --checkpoint".into()))?;
    require(path)?;
    let fp = cfg.fingerprint(&[("checkpoint", file_digest(path)?)])?;
    let dir = stage_dir(&cfg.out, Command::Eval.name(), &fp);
    if cached(&dir, &fp) {
        return Ok(dir);
    }
    let started = Instant::now();
    let prep = load_prepared(cfg)?;
    let ckpt = load_checked(path, &prep)?;
    let arch = Architecture::IoHunter(ckpt.config);
    let runs = evaluate_params(&prep, &arch, &ckpt.params, &cfg.train_config(), ckpt.config.ablation.name())?;
    write_report(&dir, Command::Eval, &fp, cfg, runs, started, |_, m| {
        m.inputs.insert("checkpoint".into(), path.display().to_string().into());
        Ok(())
    })?;
    Ok(dir)
}

fn experiment(cfg: &RunConfig, command: Command) -> Result<PathBuf, CliError> {
    let fp = cfg.fingerprint(&[])?;
    let dir = stage_dir(&cfg.out, command.name(), &fp);
    if cached(&dir, &fp) {
        return Ok(dir);
    }
    let started = Instant::now();
    let prep = load_prepared(cfg)?;
    let model = cfg.model_config(prep.d_c(), prep.d_g());
    let tc = cfg.train_config();
    let runs = match command {
        Command::SweepSparsity => sparsity_sweep(&prep, &Architecture::IoHunter(model), &tc, model.ablation.name())?,
        Command::Ablate => ablation(&prep, &model, &tc)?,
        Command::Baseline => run_baselines(&prep, &tc)?,
        other => unreachable!("{other:?} is not an experiment"),
    };
    write_report(&dir, command, &fp, cfg, runs, started, |_, _| Ok(()))?;
    Ok(dir)
}

fn transfer_sources(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let t = &cfg.transfer;
    if !t.countries.contains(&t.target) {
        return Err(CliError::Validation(format!(
            "target {:?} is not among transfer.countries {:?}",
            t.target, t.countries
        )));
    }
    let sources: Vec<String> = t.countries.iter().filter(|c| **c != t.target).cloned().collect();
    if sources.is_empty() {
        return Err(CliError::Validation("transfer needs at least one source country".into()));
    }
    Ok(sources)
}

fn pretrain_cmd(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let names = transfer_sources(cfg)?;
    let fp = cfg.fingerprint(&[])?;
    let dir = stage_dir(&cfg.out, Command::Pretrain.name(), &fp);
    if cached(&dir, &fp) {
        return Ok(dir);
    }
    let started = Instant::now();
    let sources: Vec<Prepared> = names.iter().map(|n| prepared_preset(cfg, n)).collect::<Result<_, _>>()?;
    let refs: Vec<&Prepared> = sources.iter().collect();
    let model = cfg.model_config(sources[0].d_c(), sources[0].d_g());
    let arch = Architecture::IoHunter(model);
    let tc = cfg.train_config();
    let outcomes: Vec<_> = tc
        .seeds
        .par_iter()
        .map(|&seed| pretrain(&refs, &arch, &tc, seed).map(|o| (seed, o)))
        .collect::<Result<_, _>>()?;
    let mut runs = Vec::new();
    for (seed, o) in &outcomes {
        let tests = evaluate_params_mean(&refs, &arch, &o.params, *seed)?;
        let mut r = SeedResult::new("pretrain", 1.0, *seed, o.val_f1, tests);
        r.lr = Some(o.lr);
        r.patience = Some(o.patience);
        r.best_epoch = Some(o.best_epoch);
        r.epochs_run = Some(o.epochs_run);
        runs.push(r);
    }
    write_report(&dir, Command::Pretrain, &fp, cfg, runs, started, |tmp, m| {
        m.inputs.insert("sources".into(), names.clone().into());
        for (seed, o) in &outcomes {
            let name = format!("pretrain_seed{seed}.iock");
            save_checkpoint(&tmp.join(&name), &model, &o.params)?;
            m.outputs.insert(format!("checkpoint_seed{seed}"), name.into());
        }
        Ok(())
    })?;
    Ok(dir)
}

/// Mean test Macro-F1 over several graphs' splits for `seed`.
fn evaluate_params_mean(
    graphs: &[&Prepared],
    arch: &Architecture,
    params: &iohunter::model::Params<f32>,
    seed: u64,
) -> Result<f64, CliError> {
    let tc = iohunter::train::TrainConfig {
        seeds: vec![seed],
        ..Default::default()
    };
    let mut total = 0.0;
    for g in graphs {
        total += evaluate_params(g, arch, params, &tc, "pretrain")?[0].test_macro_f1;
    }
    Ok(total / graphs.len() as f64)
}

fn finetune_cmd(cfg: &RunConfig, inv: &Invocation) -> Result<PathBuf, CliError> {
    transfer_sources(cfg)?;
    let mut extra = Vec::new();
    if let Some(p) = &inv.checkpoint {
        require(p)?;
        extra.push(("checkpoint", file_digest(p)?));
    }
    let fp = cfg.fingerprint(&extra)?;
    let dir = stage_dir(&cfg.out, Command::Finetune.name(), &fp);
    if cached(&dir, &fp) {
        return Ok(dir);
    }
    let tc = cfg.train_config();
    let pre_dir = stage_dir(&cfg.out, Command::Pretrain.name(), &cfg.fingerprint(&[])?);
    let ckpt_for = |seed: u64| match &inv.checkpoint {
        Some(p) => p.clone(),
        None => pre_dir.join(format!("pretrain_seed{seed}.iock")),
    };
    for &seed in &tc.seeds {
        require(&ckpt_for(seed))?;
    }
    let started = Instant::now();
    let target = prepared_preset(cfg, &cfg.transfer.target)?;
    let fraction = cfg.transfer.fraction;
    let per_seed: Vec<Vec<SeedResult>> = tc
        .seeds
        .par_iter()
        .map(|&seed| {
            let ckpt = load_checked(&ckpt_for(seed), &target)?;
            let arch = Architecture::IoHunter(ckpt.config);
            let (only, ft) = finetune(&ckpt.params, &arch, &target, &tc, fraction, seed)?;
            let fresh = scratch(&arch, &target, &tc, fraction, seed)?;
            Ok(vec![fresh, only, ft])
        })
        .collect::<Result<_, CliError>>()?;
    let runs = per_seed.into_iter().flatten().collect();
    write_report(&dir, Command::Finetune, &fp, cfg, runs, started, |_, m| {
        m.inputs.insert("target".into(), cfg.transfer.target.clone().into());
        let ck = inv.checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| pre_dir.display().to_string());
        m.inputs.insert("checkpoints".into(), ck.into());
        Ok(())
    })?;
    Ok(dir)
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("report.json")
    } else {
        p.to_path_buf()
    }
}

fn report(cfg: &RunConfig, inv: &Invocation) -> Result<PathBuf, CliError> {
    let paths: Vec<PathBuf> = if inv.reports.is_empty() {
        let fp = cfg.fingerprint(&[])?;
        let mut found = Vec::new();
        if let Ok(entries) = fs::read_dir(&cfg.out) {
            let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
            dirs.sort();
            for d in dirs {
                let p = d.join(&fp).join("report.json");
                if p.exists() {
                    found.push(p);
                }
            }
        }
        if found.is_empty() {
            return Err(CliError::Missing(cfg.out.join("<command>").join(fp).join("report.json")));
        }
        found
    } else {
        inv.reports.iter().map(|p| report_path(p)).collect()
    };
    let mut reports = Vec::new();
    for p in &paths {
        require(p)?;
        reports.push(ExperimentReport::read(p)?);
    }
    let first = reports[0].fingerprint.clone();
    if let Some(other) = reports.iter().find(|r| r.fingerprint != first) {
        if !inv.force {
            return Err(CliError::Validation(format!(
                "fingerprint mismatch: {} vs {} (use --force to aggregate anyway)",
                first, other.fingerprint
            )));
        }
        log::warn!("aggregating reports with different fingerprints");
    }
    for (r, p) in reports.iter().zip(&paths) {
        if !r.aggregates_consistent() {
            return Err(CliError::Validation(format!("{}: stored aggregates do not match runs", p.display())));
        }
    }
    let mut fps: Vec<&str> = reports.iter().map(|r| r.fingerprint.as_str()).collect();
    fps.sort_unstable();
    fps.dedup();
    let fp = if fps.len() == 1 { fps[0].to_string() } else { format!("mixed-{}", short_digest(&fps.join(","))) };
    let dir = stage_dir(&cfg.out, Command::Report.name(), &fp);
    let summary: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| json!({"experiment": r.experiment, "fingerprint": r.fingerprint, "summaries": r.summaries}))
        .collect();
    let mut csv = String::from("experiment,fingerprint,variant,fraction,seeds,mean_test_macro_f1,std_test_macro_f1\n");
    for r in &reports {
        for s in &r.summaries {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.experiment, r.fingerprint, s.variant, s.fraction, s.seeds, s.mean_test_macro_f1, s.std_test_macro_f1
            ));
        }
    }
    publish(&dir, |tmp| {
        fs::write(tmp.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        fs::write(tmp.join("summary.csv"), &csv)?;
        let mut m = manifest(Command::Report, &fp, cfg);
        let inputs: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
        m.inputs.insert("reports".into(), inputs.into());
        Ok(m)
    })?;
    Ok(dir)
}

fn short_digest(s: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(s.as_bytes())[..8])
}
