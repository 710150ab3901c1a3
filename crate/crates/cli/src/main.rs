use std::path::PathBuf;
use std::process::ExitCode;

use celltrack_core::Error;
use clap::{Parser, Subcommand};

use celltrack_cli::commands;
use celltrack_cli::config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(
    name = "celltrack",
    version,
    about = "Cell tracking pipeline: synthetic data, metric embedding, edge-classifying tracker, lineage inference, evaluation."
)]
struct Cli {
    /// JSON configuration file; command flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic dataset with ground truth.
    Synth(commands::synth::SynthArgs),
    /// Train the instance embedder.
    TrainDml(commands::train_dml::TrainDmlArgs),
    /// Train the edge-classifying tracker.
    TrainGnn(commands::train_gnn::TrainGnnArgs),
    /// Track a sequence with trained checkpoints.
    Infer(commands::infer::InferArgs),
    /// Score predicted tracks against ground truth.
    Eval(commands::eval::EvalArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn run(cli: Cli) -> celltrack_core::Result<i32> {
    let cfg = PipelineConfig::load_or_default(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Synth(a) => commands::synth::run(&a, &cfg).map(|()| 0),
        Cmd::TrainDml(a) => commands::train_dml::run(&a, &cfg).map(|()| 0),
        Cmd::TrainGnn(a) => commands::train_gnn::run(&a, &cfg).map(|()| 0),
        Cmd::Infer(a) => commands::infer::run(&a, &cfg).map(|()| 0),
        Cmd::Eval(a) => commands::eval::run(&a).map(|()| 0),
        Cmd::Gradcheck(a) => commands::gradcheck::run(&a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e);
            match e {
                Error::Config(_) | Error::Usage(_) | Error::Parse { .. } => ExitCode::from(2),
                Error::NonFinite { .. } | Error::Io(_) => ExitCode::from(1),
            }
        }
    }
}
