use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use iohunter::train::ExperimentReport;
use iohunter_cli::{run, CliError, Command, Invocation, RunConfig};

fn tiny(out: &Path, seeds: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.out = out.to_path_buf();
    cfg.data.preset = Some("tiny".into());
    cfg.train.seeds = seeds;
    cfg.train.max_epochs = 60;
    cfg
}

fn go(cmd: Command, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    run(cmd, cfg, &Invocation::default())
}

fn prepare(cfg: &RunConfig) {
    go(Command::Synth, cfg).unwrap();
    go(Command::BuildNet, cfg).unwrap();
}

#[test]
fn synth_build_train_produces_finite_scores_and_checkpoints() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny(root.path(), 2);
    prepare(&cfg);
    let dir = go(Command::Train, &cfg).unwrap();
    let report = ExperimentReport::read(&dir.join("report.json")).unwrap();
    assert_eq!(report.runs.len(), 2);
    assert!(report.runs.iter().all(|r| r.test_macro_f1.is_finite()));
    assert!(dir.join("model_seed0.iock").exists() && dir.join("model_seed1.iock").exists());
    assert!(dir.join("manifest.json").exists() && dir.join("metrics.csv").exists());

    let inv = Invocation {
        checkpoint: Some(dir.join("model_seed0.iock")),
        ..Invocation::default()
    };
    let eval = run(Command::Eval, &cfg, &inv).unwrap();
    let scored = ExperimentReport::read(&eval.join("report.json")).unwrap();
    assert_eq!(scored.runs[0].test_macro_f1, report.runs[0].test_macro_f1);
}

#[test]
fn cached_stages_are_reused_and_fresh_reruns_match() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny(root.path(), 1);
    prepare(&cfg);
    let dir = go(Command::Train, &cfg).unwrap();
    let manifest = fs::read(dir.join("manifest.json")).unwrap();
    let metrics = fs::read(dir.join("metrics.json")).unwrap();
    let modified = fs::metadata(dir.join("manifest.json")).unwrap().modified().unwrap();
    assert_eq!(go(Command::Train, &cfg).unwrap(), dir);
    assert_eq!(fs::metadata(dir.join("manifest.json")).unwrap().modified().unwrap(), modified);

    // a fresh output root recomputes everything from scratch
    let other = tempfile::tempdir().unwrap();
    let cfg2 = tiny(other.path(), 1);
    prepare(&cfg2);
    let dir2 = go(Command::Train, &cfg2).unwrap();
    assert_eq!(dir.file_name(), dir2.file_name());
    assert_eq!(fs::read(dir2.join("metrics.json")).unwrap(), metrics);
    assert_eq!(fs::read(dir2.join("manifest.json")).unwrap(), manifest);
}

#[test]
fn sparsity_sweep_covers_every_fraction_and_seed() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = tiny(root.path(), 2);
    cfg.train.max_epochs = 25;
    prepare(&cfg);
    let dir = go(Command::SweepSparsity, &cfg).unwrap();
    let report = ExperimentReport::read(&dir.join("report.json")).unwrap();
    assert_eq!(report.runs.len(), 7 * 2);
    assert_eq!(report.summaries.len(), 7);
    let csv = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7 * 2);
}

#[test]
fn report_refuses_mixed_fingerprints_unless_forced() {
    let root = tempfile::tempdir().unwrap();
    let a = tiny(root.path(), 1);
    let mut b = tiny(root.path(), 1);
    b.seed = 5;
    let mut dirs = Vec::new();
    for cfg in [&a, &b] {
        prepare(cfg);
        dirs.push(go(Command::Train, cfg).unwrap());
    }
    let inv = Invocation {
        reports: dirs.clone(),
        ..Invocation::default()
    };
    assert!(matches!(run(Command::Report, &a, &inv), Err(CliError::Validation(_))));
    let forced = Invocation { force: true, ..inv };
    let out = run(Command::Report, &a, &forced).unwrap();
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn missing_stages_are_reported_as_missing_inputs() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny(root.path(), 1);
    assert!(matches!(go(Command::BuildNet, &cfg), Err(CliError::Missing(_))));
    go(Command::Synth, &cfg).unwrap();
    assert!(matches!(go(Command::Train, &cfg), Err(CliError::Missing(_))));
    assert!(matches!(go(Command::Eval, &cfg), Err(CliError::Validation(_))));
}

fn bin(args: &[&str], cwd: &Path) -> i32 {
    Process::new(env!("CARGO_BIN_EXE_iohunter"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn exit_codes_distinguish_validation_from_success() {
    let root = tempfile::tempdir().unwrap();
    let p = root.path();
    assert_eq!(bin(&["synth", "--preset", "tiny"], p), 0);
    assert_eq!(bin(&["synth", "--preset", "nowhere"], p), 2);
    assert_eq!(bin(&["synth"], p), 2);
    assert_eq!(bin(&["train", "--preset", "tiny"], p), 2);
    assert_eq!(bin(&["frobnicate"], p), 2);
    assert_eq!(bin(&["synth", "--preset", "tiny", "--config", "absent.toml"], p), 2);
    fs::write(p.join("bad.toml"), "[model]\nwidth = 3\n").unwrap();
    assert_eq!(bin(&["synth", "--preset", "tiny", "--config", "bad.toml"], p), 2);
    fs::write(p.join("ok.toml"), "[train]\nseeds = 1\nmax_epochs = 30\n").unwrap();
    assert_eq!(bin(&["build-net", "--preset", "tiny", "--config", "ok.toml"], p), 0);
    assert_eq!(bin(&["train", "--preset", "tiny", "--config", "ok.toml", "--conv", "gcn"], p), 0);
    assert_eq!(bin(&["train", "--preset", "tiny", "--ablation", "sideways"], p), 2);
    assert_eq!(bin(&["eval", "--preset", "tiny", "--checkpoint", "nope.iock"], p), 2);
}

#[test]
fn real_trace_files_are_ingested() {
    let root = tempfile::tempdir().unwrap();
    let cfg = tiny(root.path(), 1);
    let synth = go(Command::Synth, &cfg).unwrap();
    let mut real = RunConfig::default();
    real.out = root.path().join("real");
    real.data.traces = Some(synth.join("traces.jsonl"));
    real.data.labels = Some(synth.join("labels.csv"));
    let ingest = go(Command::Ingest, &real).unwrap();
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(ingest.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["outputs"]["users"], 60);
    let embed = go(Command::Embed, &real).unwrap();
    let (dim, rows) = iohunter::features::read_interchange(&embed.join("content.ioem")).unwrap();
    assert_eq!((dim, rows.len()), (64, 60));
}
