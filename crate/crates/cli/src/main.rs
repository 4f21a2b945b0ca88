//! `tubelean`: prepare title datasets, train and evaluate the leaning
//! classifiers, and run channel reports.
//!
//! Exit codes: 0 success, 2 input or data error, 3 model or compatibility
//! error, 4 reference-data error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tubelean_core::corpus::SplitRatios;
use tubelean_core::models::{Scale, Variant};

use crate::config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "tubelean",
    version,
    about = "Political-leaning classification of video titles"
)]
struct Cli {
    /// TOML run configuration. Flags override its scalar values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if absent). Defaults to `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Model family: cnn, bilstm or bert.
    #[arg(long, global = true)]
    preset: Option<Variant>,
    /// Published sizes (`paper`) or small desk sizes (`desk`).
    #[arg(long, global = true)]
    scale: Option<Scale>,
    /// More logging on stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean a labelled export and write stratified train/validation/test splits.
    Prepare {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Train, validation and test fractions, e.g. 0.64,0.16,0.20.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        ratios: Option<Vec<f64>>,
    },
    /// Build the tokenizer vocabulary for the preset from the training split.
    Vocab {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train skip-gram word vectors on the training split.
    PretrainEmbed {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Train a classifier and write its checkpoint and history.
    Train {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Word vectors (text format) for the frozen/finetune scenarios.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Resolve the configuration and write the history header only.
        #[arg(long)]
        dry_run: bool,
    },
    /// Score a checkpoint on labelled titles.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Print the label and class probabilities for titles.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long = "title")]
        titles: Vec<String>,
        /// Read one title per line from stdin.
        #[arg(long)]
        stdin: bool,
    },
    /// Per-channel leaning distributions checked against agency ratings.
    ChannelReport {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory with one export file per channel.
        #[arg(long)]
        exports: Option<PathBuf>,
        /// `channel,label` CSV; the bundled agency table by default.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Fail on channels missing from the ground truth.
        #[arg(long)]
        strict: bool,
    },
}

/// Pins the exit code of an error regardless of its cause.
#[derive(Debug)]
pub struct Coded(pub u8, pub anyhow::Error);

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.1)
    }
}

impl std::error::Error for Coded {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use tubelean_core::Error as E;
    for cause in err.chain() {
        if let Some(Coded(code, _)) = cause.downcast_ref::<Coded>() {
            return *code;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::TokenOutOfRange { .. } | E::Shape(_) | E::Checkpoint(_) | E::NonFinite(_) => 3,
                E::UnknownChannel(_) | E::GroundTruth(_) => 4,
                _ => 2,
            };
        }
    }
    2
}

/// `a: b: c` from the error chain, skipping causes whose text the
/// previous message already ends with.
fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if cause.downcast_ref::<Coded>().is_some() || out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&Overrides {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        preset: cli.preset,
        scale: cli.scale,
        verbose: cli.verbose,
    })?;
    env_logger::Builder::new()
        .filter_level(cfg.verbosity)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    match cli.command {
        Command::Prepare { input, ratios } => {
            let ratios = ratios.map(|r| SplitRatios::new(r[0], r[1], r[2])).transpose()?;
            commands::prepare(&cfg, &input, ratios)
        }
        Command::Vocab { train, size } => commands::vocab(&cfg, &train, size),
        Command::PretrainEmbed { train, vocab } => commands::pretrain_embed(&cfg, &train, &vocab),
        Command::Train {
            train,
            validation,
            vocab,
            embeddings,
            dry_run,
        } => commands::train(
            &cfg,
            &commands::TrainInputs {
                train,
                validation,
                vocab,
                embeddings,
                dry_run,
            },
        ),
        Command::Evaluate { checkpoint, test } => commands::evaluate(&cfg, &checkpoint, &test),
        Command::Predict {
            checkpoint,
            titles,
            stdin,
        } => commands::predict(&cfg, &checkpoint, &titles, stdin),
        Command::ChannelReport {
            checkpoint,
            exports,
            ground_truth,
            strict,
        } => commands::channel_report(&cfg, &checkpoint, &exports, &ground_truth, strict),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
