mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use primfuse_core::config::WorldChoice;

#[derive(Parser, Debug)]
#[command(name = "primfuse", version, about = "Multi-attribute compositional zero-shot learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the top-level `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `evaluation.world`.
    #[arg(long, global = true)]
    pub world: Option<WorldChoice>,
    /// `section.key=value` override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic manifest and its latent-truth sidecar.
    Synth(Common),
    /// Train a model and write a checkpoint and step log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Fail if any frozen store changed during training.
        #[arg(long)]
        freeze_check: bool,
    },
    /// Evaluate a checkpoint and write a metrics report.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate; defaults to the one in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Dataset statistics for a manifest.
    Stats(Common),
    /// Encoder-call, FLOP and wall-clock accounting.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(common) => commands::synth(&common),
        Command::Train {
            common,
            resume,
            freeze_check,
        } => commands::train(&common, resume, freeze_check),
        Command::Eval { common, checkpoint } => commands::eval(&common, checkpoint),
        Command::Stats(common) => commands::stats(&common),
        Command::Bench { common, checkpoint } => commands::bench(&common, checkpoint),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            log::error!("{failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
