use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod render;
mod settings;

use settings::{overrides, RunSettings};

#[derive(Parser, Debug)]
#[command(name = "paat", version, about = "Partition-based label attention classifier")]
struct Cli {
    /// Log level for diagnostics on stderr.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus and write train/valid/test splits.
    GenData(GenDataArgs),
    /// Train a model and write the best checkpoint and the epoch log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset file and write a JSON report.
    Eval(EvalArgs),
    /// Export attention maps for one document.
    Explain(ExplainArgs),
    /// Train every cell of a variant / partition sweep over several seeds.
    Ablate(AblateArgs),
}

/// Settings shared by every command. Later sources override earlier ones:
/// built-in defaults, `--config`, the named flags, then `--set`.
#[derive(Args, Debug, Default, Clone)]
pub struct SettingArgs {
    /// Flat key=value settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any setting, e.g. `--set alpha=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Generator preset: dispersed or concentrated.
    #[arg(long)]
    preset: Option<String>,
    /// Model seed (initialization, shuffling, dropout). For gen-data it is
    /// the generator and split seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    n_enc: Option<usize>,
    #[arg(long)]
    n_att: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated k values for P@k.
    #[arg(long)]
    k: Option<String>,
}

impl SettingArgs {
    pub fn resolve(&self) -> anyhow::Result<RunSettings> {
        let mut s = RunSettings::default();
        if let Some(p) = &self.preset {
            s.gen = paat::GenSpec::preset(p)?;
        }
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        let mut flags = Vec::new();
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                flags.push(format!("{k}={v}"));
            }
        };
        flag("seed", self.seed.map(|v| v.to_string()));
        flag("variant", self.variant.clone());
        flag("n_enc", self.n_enc.map(|v| v.to_string()));
        flag("n_att", self.n_att.map(|v| v.to_string()));
        flag("alpha", self.alpha.map(|v| v.to_string()));
        flag("lr", self.lr.map(|v| v.to_string()));
        flag("epochs", self.epochs.map(|v| v.to_string()));
        flag("patience", self.patience.map(|v| v.to_string()));
        flag("threshold", self.threshold.map(|v| v.to_string()));
        flag("k", self.k.clone());
        s.apply(&overrides(&flags)?)?;
        s.apply(&overrides(&self.sets)?)?;
        Ok(s)
    }
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Output directory for train.tsv, valid.tsv, test.tsv and vocab.txt.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    settings: SettingArgs,
    /// Fixed document length (sets both length bounds).
    #[arg(long)]
    doc_len: Option<usize>,
    #[arg(long)]
    signature_per_label: Option<usize>,
    #[arg(long)]
    dispersion: Option<usize>,
    #[arg(long)]
    num_docs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory written by gen-data (train.tsv, valid.tsv, vocab.txt).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for model.ckpt, epochs.tsv and config.txt.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    settings: SettingArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset file to evaluate.
    #[arg(long)]
    data: PathBuf,
    /// Vocabulary file; defaults to vocab.txt next to the dataset.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Second checkpoint; adds a disagreement block to the report.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "5,8")]
    k: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Document id.
    #[arg(long)]
    doc: String,
    /// Comma-separated label names (e.g. C03,C11); defaults to the gold labels.
    #[arg(long)]
    labels: Option<String>,
    /// JSON output path; a plain-text rendering is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Tokens per line in the text rendering.
    #[arg(long, default_value_t = 20)]
    width: usize,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the table and per-run reports.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    settings: SettingArgs,
    /// Comma-separated variants, one row each.
    #[arg(long, default_value = "paat,paat-pe,paat-pa,paat-pea,paat-bi")]
    variants: String,
    /// Comma-separated attention partition counts, one full-model row each.
    #[arg(long)]
    partitions: Option<String>,
    /// Number of seeds per cell (seeds 1..=n).
    #[arg(long, default_value_t = 5)]
    seeds: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Explain(a) => commands::explain(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
