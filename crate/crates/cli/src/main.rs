mod cache;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "typeforge",
    version,
    about = "Entity typing: pretrain on free-form types, fine-tune on a schema"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the configurable commands.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON config with flat dotted keys, or a resolved-config snapshot.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key=value` overrides applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Multi-task pretraining on a free-form corpus.
    PretrainUfet {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a checkpoint on a (few-shot) hierarchical training set.
    FinetuneFet {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Label → phrase overrides (TSV).
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a k-shot train/dev split from a labeled pool.
    SampleFewshot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        schema: PathBuf,
        /// The pool to sample from.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        k: usize,
        /// Output directory for train.jsonl and dev.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score and decode examples with a checkpoint.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        on: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Predictions JSONL.
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of a checkpoint on a test set, or the repeated few-shot
    /// protocol when --k / --repeats are given.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        on: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Pool for few-shot sampling (protocol mode).
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Metrics JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the label → phrase table of a schema.
    MapLabels {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        schema: PathBuf,
        /// Overrides TSV.
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus and its schema from a generator config.
    GenSynth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    use commands as c;
    match cli.command {
        Command::PretrainUfet {
            common,
            schema,
            train,
            dev,
            out,
        } => c::pretrain_ufet(common, &schema, &train, dev.as_deref(), &out),
        Command::FinetuneFet {
            common,
            from,
            schema,
            mapping,
            train,
            dev,
            out,
        } => c::finetune_fet(
            common,
            &from,
            &schema,
            mapping.as_deref(),
            &train,
            dev.as_deref(),
            &out,
        ),
        Command::SampleFewshot {
            common,
            schema,
            train,
            k,
            out,
        } => c::sample_fewshot(common, &schema, &train, k, &out),
        Command::Predict {
            common,
            from,
            on,
            schema,
            mapping,
            threshold,
            out,
        } => c::predict(
            common,
            &c::Target {
                from,
                schema,
                mapping,
                threshold,
            },
            &on,
            &out,
        ),
        Command::Evaluate {
            common,
            from,
            on,
            schema,
            mapping,
            threshold,
            train,
            k,
            repeats,
            out,
        } => {
            let target = c::Target {
                from,
                schema,
                mapping,
                threshold,
            };
            if train.is_some() || k.is_some() || repeats.is_some() {
                c::evaluate_protocol(common, &target, &on, train.as_deref(), k, repeats, &out)
            } else {
                c::evaluate(common, &target, &on, &out)
            }
        }
        Command::MapLabels {
            common,
            schema,
            mapping,
            out,
        } => c::map_labels(common, &schema, mapping.as_deref(), &out),
        Command::GenSynth { common, out } => c::gen_synth(common, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
