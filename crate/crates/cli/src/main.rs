use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use iohunter::model::{Ablation, Conv};
use iohunter_cli::{run, CliError, Command, Invocation, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "iohunter", version, about = "Detect information-operation drivers in social media traces")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Synthetic preset to use as the data source.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Target label fraction for transfer runs.
    #[arg(long, global = true)]
    fraction: Option<f64>,
    #[arg(long, global = true)]
    target_country: Option<String>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_enum::<Ablation>)]
    ablation: Option<Ablation>,
    #[arg(long, global = true, value_parser = parse_enum::<Conv>)]
    conv: Option<Conv>,
    /// Aggregate reports even when their fingerprints differ.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Parse traces and labels into a dataset bundle.
    Ingest,
    /// Build the per-trace similarity layers and the fused network.
    BuildNet,
    /// Export per-user content embeddings.
    Embed,
    /// Supervised training with grid search and early stopping.
    Train,
    /// Score a saved checkpoint on the configured data.
    Eval,
    /// Train at every label fraction of the sparsity grid.
    SweepSparsity,
    /// Pretrain on every transfer country except the target.
    Pretrain,
    /// Fine-tune pretrained weights on the target country.
    Finetune,
    /// Train each fusion ablation.
    Ablate,
    /// Centrality pruning and content MLP baselines.
    Baseline,
    /// Generate a synthetic campaign.
    Synth,
    /// Aggregate experiment reports.
    Report {
        /// Report files or directories holding report.json.
        paths: Vec<PathBuf>,
    },
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("IOHUNTER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("IOHUNTER_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn main_inner(cli: Cli) -> Result<PathBuf, CliError> {
    configure_threads()?;
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out,
        preset: cli.preset,
        fraction: cli.fraction,
        target_country: cli.target_country,
        ablation: cli.ablation,
        conv: cli.conv,
    });
    let mut inv = Invocation {
        checkpoint: cli.checkpoint,
        force: cli.force,
        reports: Vec::new(),
    };
    let command = match cli.command {
        Sub::Ingest => Command::Ingest,
        Sub::BuildNet => Command::BuildNet,
        Sub::Embed => Command::Embed,
        Sub::Train => Command::Train,
        Sub::Eval => Command::Eval,
        Sub::SweepSparsity => Command::SweepSparsity,
        Sub::Pretrain => Command::Pretrain,
        Sub::Finetune => Command::Finetune,
        Sub::Ablate => Command::Ablate,
        Sub::Baseline => Command::Baseline,
        Sub::Synth => Command::Synth,
        Sub::Report { paths } => {
            inv.reports = paths;
            Command::Report
        }
    };
    run(command, &cfg, &inv)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
