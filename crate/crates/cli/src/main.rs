//! `fusionforge` — experiment harness for class-adaptive late fusion.
//!
//! Exit codes: 0 success, 1 computational failure (divergence, gradient
//! check above tolerance), 2 usage or validation error.

mod eval;
mod fit;
mod gen;
mod lstm;
mod predict;
mod prior;
mod util;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fusionforge", version, about = "Class-adaptive fusion of multi-stream classifier scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic multi-stream dataset
    Gen(gen::GenArgs),
    /// Estimate the per-stream class-confusion prior from a dataset
    Prior(prior::PriorArgs),
    /// Fit the adaptive fusion model (fixed lambda1 or cross-validated)
    Fit(fit::FitArgs),
    /// Write fused scores for a dataset using a fitted model
    Predict(predict::PredictArgs),
    /// Compare fusion methods on a test set
    Eval(eval::EvalArgs),
    /// Temporal LSTM: toy training and gradient checking
    #[command(subcommand)]
    Lstm(lstm::LstmCommand),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => gen::run(args),
        Command::Prior(args) => prior::run(args),
        Command::Fit(args) => fit::run(args),
        Command::Predict(args) => predict::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Lstm(cmd) => lstm::run(cmd),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

/// 1 for failures of the computation itself, 2 for bad inputs.
fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<fusionforge_core::Error>() {
        Some(core_err) if core_err.is_numerical() => 1,
        _ => 2,
    }
}
