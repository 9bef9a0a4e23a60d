//! `slotfill`: train, evaluate and analyse label-embedding slot-filling taggers.

mod artifacts;
mod data;
mod eval;
mod tools;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "slotfill", version, about)]
struct Cli {
    /// Default directory for command outputs.
    #[arg(long, global = true, env = "SLOTFILL_OUT_DIR", default_value = "slotfill-out")]
    out_root: PathBuf,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model per seed and write checkpoints with run manifests.
    Train(train::TrainArgs),
    /// Score one system, or compare two, on labeled test data.
    Eval(eval::EvalArgs),
    /// Tag a corpus with a trained model.
    Predict(eval::PredictArgs),
    /// Build coverage-reduced training and development sets.
    Reduce(tools::ReduceArgs),
    /// Generate a synthetic labeled corpus from a template grammar.
    Synth(tools::SynthArgs),
    /// Compare analytic gradients with finite differences on a tiny model.
    Gradcheck(tools::GradcheckArgs),
    /// Count trainable parameters for given dimensions.
    Params(tools::ParamsArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    let out = cli.out_root.as_path();
    let result = match &cli.command {
        Command::Train(a) => train::run(a, out),
        Command::Eval(a) => eval::run(a, out),
        Command::Predict(a) => eval::predict(a),
        Command::Reduce(a) => tools::reduce(a, out),
        Command::Synth(a) => tools::synth(a, out),
        Command::Gradcheck(a) => tools::gradcheck(a),
        Command::Params(a) => tools::params(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
