//! The `unlearn` command line: synthetic data generation, training,
//! unlearning, evaluation and membership inference, each driven by one JSON
//! experiment config whose fully-resolved form is echoed next to the outputs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use unlearn_core::Error;

pub mod commands;
pub mod config;

pub use commands::{Common, Manifest};
pub use config::{ExperimentConfig, Overrides, Resolved, TaskSection};

#[derive(Debug, Parser)]
#[command(name = "unlearn", version, about = "Contrastive machine unlearning experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (JSON); omitted sections take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Engine seed; for gen-data, the dataset seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic train/test pair as CSV plus a manifest.
    GenData,
    /// Train the original model on the full training set.
    Train,
    /// Run an unlearning method on the configured task.
    Unlearn {
        /// contrastive, retrain, finetune or neggrad
        #[arg(long)]
        method: String,
        /// Checkpoint of the original model.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Report accuracies and embedding geometry on the configured task.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Model to compute accuracy deltas against, typically the retrained one.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Model before unlearning, for the geometry comparison.
        #[arg(long)]
        original: Option<PathBuf>,
    },
    /// Membership-inference attack against a model.
    Mia {
        #[arg(long)]
        model: PathBuf,
    },
}

pub fn run(cli: Cli) -> unlearn_core::Result<()> {
    let c = cli.common;
    let common = Common { config: c.config, out: c.out, seed: c.seed };
    match cli.command {
        Command::GenData => commands::gen_data(&common),
        Command::Train => commands::train_cmd(&common),
        Command::Unlearn { method, from } => commands::unlearn_cmd(&common, &method, from.as_deref()),
        Command::Eval { model, reference, original } => {
            commands::eval_cmd(&common, &model, reference.as_deref(), original.as_deref())
        }
        Command::Mia { model } => commands::mia_cmd(&common, &model),
    }
}

/// 2 for bad input, 3 for failures during computation.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        2
    } else {
        3
    }
}
