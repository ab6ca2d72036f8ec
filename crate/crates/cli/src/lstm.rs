//! `fusionforge lstm` — toy temporal model training and gradient checking.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Subcommand};
use fusionforge_core::temporal_lstm::{
    gradient_check, init_network, majority_task, sequence_accuracy, train, SequenceSample,
    TrainOptions,
};
use fusionforge_core::Error;
use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::util::{write_json, write_text, SizeList};

#[derive(Subcommand, Debug)]
pub enum LstmCommand {
    /// Train a stacked LSTM on the majority-symbol task
    Train(TrainArgs),
    /// Compare BPTT gradients with central finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Hidden sizes per layer, e.g. 16,12
    #[arg(long, default_value = "16,12")]
    pub hidden: SizeList,
    #[arg(long, default_value_t = 20)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 256)]
    pub train_samples: usize,
    #[arg(long, default_value_t = 128)]
    pub test_samples: usize,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Stop once training accuracy reaches this level
    #[arg(long, default_value_t = 0.99)]
    pub stop_at: f64,
    #[arg(long, default_value = "net.json")]
    pub out_model: PathBuf,
    #[arg(long, default_value = "lstm_report.json")]
    pub out_report: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Hidden sizes per layer
    #[arg(long, default_value = "8,6")]
    pub hidden: SizeList,
    #[arg(long, default_value_t = 5)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Sequence length
    #[arg(long, default_value_t = 7)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub fd_step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

pub fn run(cmd: LstmCommand) -> Result<()> {
    match cmd {
        LstmCommand::Train(args) => run_train(args),
        LstmCommand::Gradcheck(args) => run_gradcheck(args),
    }
}

fn run_train(args: TrainArgs) -> Result<()> {
    // Disjoint seeds for data and weights; both derive from --seed.
    let train_set = majority_task(args.train_samples, args.seq_len, args.classes, args.seed);
    let test_set = majority_task(
        args.test_samples,
        args.seq_len,
        args.classes,
        args.seed.wrapping_add(1),
    );
    let net = init_network(args.classes, &args.hidden.0, args.classes, args.seed.wrapping_add(2));

    let opts = TrainOptions {
        learning_rate: args.lr,
        momentum: args.momentum,
        grad_clip: args.clip,
        max_iters: args.iters,
        batch_size: args.batch,
        seed: args.seed,
        stop_train_accuracy: Some(args.stop_at),
        eval_every: 100,
    };
    let (trained, report) = train(&net, &train_set, &opts)?;
    let test_accuracy = sequence_accuracy(&trained, &test_set)?;

    write_text(&args.out_model, &trained.to_json())?;
    let report_json = serde_json::json!({
        "config": {
            "command": "lstm train",
            "hidden": args.hidden.0,
            "seq_len": args.seq_len,
            "classes": args.classes,
            "train_samples": args.train_samples,
            "test_samples": args.test_samples,
            "iters": args.iters,
            "lr": args.lr,
            "momentum": args.momentum,
            "clip": args.clip,
            "batch": args.batch,
            "seed": args.seed,
            "stop_at": args.stop_at,
        },
        "iterations": report.iterations,
        "train_accuracy": report.final_train_accuracy,
        "test_accuracy": test_accuracy,
        "loss_trace": report.loss_trace,
    });
    write_json(&args.out_report, &report_json)?;
    println!(
        "trained {} iterations: train accuracy {:.4}, test accuracy {:.4}",
        report.iterations, report.final_train_accuracy, test_accuracy
    );
    Ok(())
}

fn run_gradcheck(args: GradcheckArgs) -> Result<()> {
    let net = init_network(args.input_dim, &args.hidden.0, args.classes, args.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
    let seq = SequenceSample {
        inputs: (0..args.steps.max(1))
            .map(|_| Array1::from_shape_fn(args.input_dim, |_| rng.gen_range(-1.0..1.0)))
            .collect(),
        label: rng.gen_range(0..args.classes),
    };
    let err = gradient_check(&net, &seq, args.fd_step)?;
    println!(
        "gradcheck: max relative error {err:.3e} over {} parameters (tolerance {:.1e})",
        net.param_count(),
        args.tolerance
    );
    if err > args.tolerance {
        return Err(Error::numerical(format!(
            "gradient check failed: {err:.3e} exceeds tolerance {:.1e}",
            args.tolerance
        ))
        .into());
    }
    Ok(())
}
