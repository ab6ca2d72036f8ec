//! `fusionforge eval` — side-by-side comparison of fusion methods.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use fusionforge_core::baselines::{
    average_fusion, plain_logistic_fusion_fit, weighted_fusion_apply, weighted_fusion_fit,
};
use fusionforge_core::fusion_solver::{predict, FusionModel, SolverOptions};
use fusionforge_core::metrics::{evaluate, EvalReport};
use fusionforge_core::score_data::{load_dataset, stack_streams, Dataset};

use crate::util::{read_text, write_json, write_text};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Test dataset manifest
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fitted model JSON (needed by the adaptive method)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Training manifest (needed by weighted and logistic)
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    /// Comma-separated subset of: streams, average, weighted, logistic, adaptive
    #[arg(long, default_value = "streams,average,weighted,logistic,adaptive")]
    pub methods: String,
    #[arg(long, default_value = "results.json")]
    pub out: PathBuf,
    /// Optional per-class AP table (one row per class, one column per method)
    #[arg(long)]
    pub per_class_csv: Option<PathBuf>,
    /// Simplex grid resolution for the weighted baseline
    #[arg(long, default_value_t = 0.1)]
    pub weighted_grid_step: f64,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

struct MethodResult {
    name: String,
    report: EvalReport,
}

fn train_dataset(args: &EvalArgs, method: &str) -> Result<Dataset> {
    match &args.train_manifest {
        Some(path) => Ok(load_dataset(path)?),
        None => bail!("method {method:?} needs --train-manifest"),
    }
}

pub fn run(args: EvalArgs) -> Result<()> {
    let test = load_dataset(&args.manifest)?;
    let test_stacked = stack_streams(&test.streams)?;

    let requested: Vec<String> = args
        .methods
        .split(',')
        .map(|m| m.trim().to_string())
        .filter(|m| !m.is_empty())
        .collect();
    if requested.is_empty() {
        bail!("--methods must name at least one method");
    }

    let mut results: Vec<MethodResult> = Vec::new();
    for method in &requested {
        match method.as_str() {
            "streams" => {
                for stream in &test.streams {
                    results.push(MethodResult {
                        name: format!("stream:{}", stream.stream_id),
                        report: evaluate(stream, &test.labels, test.mode)?,
                    });
                }
            }
            "average" => {
                let fused = average_fusion(&test.streams)?;
                results.push(MethodResult {
                    name: "average".into(),
                    report: evaluate(&fused, &test.labels, test.mode)?,
                });
            }
            "weighted" => {
                let train = train_dataset(&args, method)?;
                let model =
                    weighted_fusion_fit(&train, args.weighted_grid_step, args.folds, args.seed)?;
                let fused = weighted_fusion_apply(&model, &test.streams)?;
                results.push(MethodResult {
                    name: "weighted".into(),
                    report: evaluate(&fused, &test.labels, test.mode)?,
                });
            }
            "logistic" => {
                let train = train_dataset(&args, method)?;
                let stacked = stack_streams(&train.streams)?;
                let model =
                    plain_logistic_fusion_fit(&stacked, &train.labels, &SolverOptions::default())?;
                let fused = predict(&model, &test_stacked)?;
                results.push(MethodResult {
                    name: "logistic".into(),
                    report: evaluate(&fused, &test.labels, test.mode)?,
                });
            }
            "adaptive" => {
                let Some(model_path) = &args.model else {
                    bail!("method \"adaptive\" needs --model");
                };
                let model = FusionModel::from_json(&read_text(model_path)?)?;
                let fused = predict(&model, &test_stacked)?;
                results.push(MethodResult {
                    name: "adaptive".into(),
                    report: evaluate(&fused, &test.labels, test.mode)?,
                });
            }
            other => bail!("unknown method {other:?}; expected streams, average, weighted, logistic, or adaptive"),
        }
    }

    let methods_json: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "name": r.name,
                "accuracy": r.report.accuracy,
                "map": r.report.map,
                "per_class_ap": r.report.per_class_ap,
            })
        })
        .collect();
    let output = serde_json::json!({
        "config": {
            "command": "eval",
            "manifest": args.manifest.display().to_string(),
            "model": args.model.as_ref().map(|p| p.display().to_string()),
            "train_manifest": args.train_manifest.as_ref().map(|p| p.display().to_string()),
            "methods": requested,
            "weighted_grid_step": args.weighted_grid_step,
            "folds": args.folds,
            "seed": args.seed,
        },
        "methods": methods_json,
    });
    write_json(&args.out, &output)?;

    if let Some(csv_path) = &args.per_class_csv {
        let mut text = String::from("class");
        for r in &results {
            text.push(',');
            text.push_str(&r.name);
        }
        text.push('\n');
        for (c, class_name) in test.labels.class_names.iter().enumerate() {
            text.push_str(class_name);
            for r in &results {
                text.push(',');
                let ap = r.report.per_class_ap[c];
                if ap.is_nan() {
                    text.push_str("NA");
                } else {
                    text.push_str(&format!("{ap}"));
                }
            }
            text.push('\n');
        }
        write_text(csv_path, &text)?;
    }

    for r in &results {
        match r.report.accuracy {
            Some(acc) => println!("{:<18} accuracy {:.4}  mAP {:.4}", r.name, acc, r.report.map),
            None => println!("{:<18} mAP {:.4}", r.name, r.report.map),
        }
    }
    Ok(())
}
