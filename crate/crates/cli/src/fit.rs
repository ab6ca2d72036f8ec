//! `fusionforge fit` — adaptive fusion model fitting.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Result;
use clap::Args;
use fusionforge_core::class_prior::{estimate_prior, PriorDiagonal, PriorMatrix};
use fusionforge_core::fusion_solver::{
    cross_validate, fit, InitMode, SolverOptions, DEFAULT_LAMBDA2,
};
use fusionforge_core::score_data::load_dataset;

use crate::util::{read_text, write_json, write_text, FloatList};

/// Either a fixed strength or `cv` for grid selection.
#[derive(Debug, Clone, Copy)]
pub enum Lambda1Arg {
    Cv,
    Fixed(f64),
}

impl FromStr for Lambda1Arg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("cv") {
            return Ok(Lambda1Arg::Cv);
        }
        s.parse::<f64>()
            .map(Lambda1Arg::Fixed)
            .map_err(|_| format!("expected a number or \"cv\", got {s:?}"))
    }
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Training dataset manifest
    #[arg(long)]
    pub manifest: PathBuf,
    /// Prior-pull strength, or `cv` to select from the grid
    #[arg(long, default_value = "cv")]
    pub lambda1: Lambda1Arg,
    /// Sparsity strength (fixed, not cross-validated)
    #[arg(long, default_value_t = DEFAULT_LAMBDA2)]
    pub lambda2: f64,
    /// Grid searched when --lambda1 cv
    #[arg(long, default_value = "1e-5,1e-4,1e-3,1e-2")]
    pub grid: FloatList,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Import a prior JSON instead of estimating from the training data
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long, default_value = "accuracy")]
    pub prior_diagonal: PriorDiagonal,
    #[arg(long, default_value = "prior")]
    pub init: InitMode,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step_size: f64,
    #[arg(long, default_value = "model.json")]
    pub out_model: PathBuf,
    #[arg(long, default_value = "report.json")]
    pub out_report: PathBuf,
}

pub fn run(args: FitArgs) -> Result<()> {
    let train = load_dataset(&args.manifest)?;
    let opts = SolverOptions {
        max_iters: args.max_iters,
        rel_tol: args.rel_tol,
        step_size: args.step_size,
        init: args.init,
        ..SolverOptions::default()
    };

    let imported_prior: Option<PriorMatrix> = match &args.prior {
        Some(path) => Some(PriorMatrix::from_json(&read_text(path)?)?),
        None => None,
    };

    let (model, chosen_lambda1, grid_scores) = match args.lambda1 {
        Lambda1Arg::Fixed(lambda1) => {
            let prior = match imported_prior {
                Some(p) => p,
                None => estimate_prior(&train, args.prior_diagonal)?,
            };
            let model = fit(
                &train.stacked(),
                &train.labels,
                &prior,
                lambda1,
                args.lambda2,
                &opts,
            )?;
            (model, lambda1, None)
        }
        Lambda1Arg::Cv => {
            let outcome = cross_validate(
                &train,
                &args.grid.0,
                args.lambda2,
                args.folds,
                args.seed,
                &opts,
                args.prior_diagonal,
            )?;
            (outcome.model, outcome.best_lambda1, Some(outcome.grid_scores))
        }
    };

    write_text(&args.out_model, &model.to_json())?;

    let degenerate = chosen_lambda1 == 0.0 && args.lambda2 == 0.0;
    let mut report = serde_json::json!({
        "config": {
            "command": "fit",
            "manifest": args.manifest.display().to_string(),
            "lambda1": match args.lambda1 {
                Lambda1Arg::Cv => serde_json::json!("cv"),
                Lambda1Arg::Fixed(v) => serde_json::json!(v),
            },
            "lambda2": args.lambda2,
            "grid": args.grid.0,
            "folds": args.folds,
            "seed": args.seed,
            "prior_diagonal": args.prior_diagonal,
            "init": args.init,
            "max_iters": args.max_iters,
            "rel_tol": args.rel_tol,
            "step_size": args.step_size,
        },
        "lambda1": chosen_lambda1,
        "lambda2": args.lambda2,
        "iterations": model.fit_report.iterations,
        "converged": model.fit_report.converged,
        "final_objective": model.fit_report.objective_trace.last(),
        "objective_trace": model.fit_report.objective_trace,
        "sparsity": model.fit_report.sparsity,
    });
    if let Some(scores) = grid_scores {
        report["cv_grid_scores"] = serde_json::json!(scores);
    }
    if degenerate {
        report["note"] =
            serde_json::json!("degenerates to standard logistic regression fusion");
    }
    write_json(&args.out_report, &report)?;

    println!(
        "fit done: lambda1 {} lambda2 {} sparsity {:.3} ({} iterations, converged: {})",
        chosen_lambda1,
        args.lambda2,
        model.fit_report.sparsity,
        model.fit_report.iterations,
        model.fit_report.converged
    );
    Ok(())
}
