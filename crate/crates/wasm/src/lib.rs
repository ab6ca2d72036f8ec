//! Browser demo bindings: JSON-in/JSON-out wrappers around the fusion
//! pipeline, the sparsity sweep, and toy LSTM training. The inner functions
//! are plain Rust so the demo surface is testable on any target; the
//! `#[wasm_bindgen]` exports are thin shims over them.

use fusionforge_core::baselines::{average_fusion, plain_logistic_fusion_fit};
use fusionforge_core::class_prior::{estimate_prior, PriorDiagonal};
use fusionforge_core::fusion_solver::{fit, predict, SolverOptions};
use fusionforge_core::metrics::evaluate;
use fusionforge_core::score_data::{generate_synthetic, Dataset, SynthConfig};
use fusionforge_core::temporal_lstm::{
    init_network, majority_task, sequence_accuracy, train, TrainOptions,
};
use serde::Deserialize;
use wasm_bindgen::prelude::*;

#[derive(Deserialize)]
struct FusionDemoConfig {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_classes")]
    classes: usize,
    #[serde(default = "default_streams")]
    streams: usize,
    #[serde(default = "default_train")]
    n_train: usize,
    #[serde(default = "default_test")]
    n_test: usize,
    #[serde(default = "default_rel_high")]
    rel_high: f64,
    #[serde(default = "default_rel_low")]
    rel_low: f64,
    #[serde(default = "default_sharpness")]
    sharpness: f64,
    #[serde(default = "default_lambda1")]
    lambda1: f64,
    #[serde(default = "default_lambda2")]
    lambda2: f64,
}

fn default_seed() -> u64 {
    7
}
fn default_classes() -> usize {
    6
}
fn default_streams() -> usize {
    3
}
fn default_train() -> usize {
    300
}
fn default_test() -> usize {
    1000
}
fn default_rel_high() -> f64 {
    0.9
}
fn default_rel_low() -> f64 {
    0.55
}
fn default_sharpness() -> f64 {
    0.25
}
fn default_lambda1() -> f64 {
    1e-2
}
fn default_lambda2() -> f64 {
    1e-3
}

impl FusionDemoConfig {
    fn datasets(&self) -> Result<(Dataset, Dataset), String> {
        let mut cfg = SynthConfig::staggered(
            self.n_train.clamp(20, 5_000),
            self.n_test.clamp(20, 20_000),
            self.classes.clamp(2, 12),
            self.streams.clamp(1, 6),
            self.rel_high,
            self.rel_low,
            self.seed,
        );
        cfg.confusion_sharpness = self.sharpness;
        generate_synthetic(&cfg).map_err(|e| e.to_string())
    }
}

fn matrix_rows(a: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Generate a dataset, fit the adaptive model at fixed (lambda1, lambda2),
/// and compare against per-stream, average, and plain logistic baselines.
pub fn fusion_experiment_json(config_json: &str) -> Result<String, String> {
    let cfg: FusionDemoConfig = serde_json::from_str(config_json).map_err(|e| e.to_string())?;
    if cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0 {
        return Err("lambda values must be non-negative".into());
    }
    let (train, test) = cfg.datasets()?;
    let test_stacked = test.stacked();

    let prior = estimate_prior(&train, PriorDiagonal::Accuracy).map_err(|e| e.to_string())?;
    let model = fit(
        &train.stacked(),
        &train.labels,
        &prior,
        cfg.lambda1,
        cfg.lambda2,
        &SolverOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let fused = predict(&model, &test_stacked).map_err(|e| e.to_string())?;
    let adaptive_eval = evaluate(&fused, &test.labels, test.mode).map_err(|e| e.to_string())?;

    let avg = average_fusion(&test.streams).map_err(|e| e.to_string())?;
    let avg_eval = evaluate(&avg, &test.labels, test.mode).map_err(|e| e.to_string())?;

    let plain =
        plain_logistic_fusion_fit(&train.stacked(), &train.labels, &SolverOptions::default())
            .map_err(|e| e.to_string())?;
    let plain_fused = predict(&plain, &test_stacked).map_err(|e| e.to_string())?;
    let plain_eval = evaluate(&plain_fused, &test.labels, test.mode).map_err(|e| e.to_string())?;

    let mut methods = Vec::new();
    for stream in &test.streams {
        let report = evaluate(stream, &test.labels, test.mode).map_err(|e| e.to_string())?;
        methods.push(serde_json::json!({
            "name": format!("stream:{}", stream.stream_id),
            "accuracy": report.accuracy,
            "map": report.map,
        }));
    }
    methods.push(serde_json::json!({
        "name": "average", "accuracy": avg_eval.accuracy, "map": avg_eval.map
    }));
    methods.push(serde_json::json!({
        "name": "logistic", "accuracy": plain_eval.accuracy, "map": plain_eval.map
    }));
    methods.push(serde_json::json!({
        "name": "adaptive", "accuracy": adaptive_eval.accuracy, "map": adaptive_eval.map
    }));

    // Long traces compress fine for plotting.
    let trace = &model.fit_report.objective_trace;
    let stride = (trace.len() / 400).max(1);
    let trace_points: Vec<(usize, f64)> = trace
        .iter()
        .enumerate()
        .filter(|(i, _)| i % stride == 0 || *i == trace.len() - 1)
        .map(|(i, &v)| (i, v))
        .collect();

    let out = serde_json::json!({
        "classes": train.n_classes(),
        "streams": train.n_streams(),
        "class_names": train.labels.class_names,
        "stream_order": model.stream_order,
        "prior_per_stream": prior.per_stream.iter().map(matrix_rows).collect::<Vec<_>>(),
        "weights": matrix_rows(&model.weights),
        "objective_trace": trace_points,
        "iterations": model.fit_report.iterations,
        "converged": model.fit_report.converged,
        "sparsity": model.fit_report.sparsity,
        "methods": methods,
        "per_class_ap": {
            "adaptive": adaptive_eval.per_class_ap,
            "average": avg_eval.per_class_ap,
        },
    });
    Ok(out.to_string())
}

/// Fit across a lambda2 ladder and report sparsity/accuracy per point.
pub fn sparsity_sweep_json(config_json: &str) -> Result<String, String> {
    let cfg: FusionDemoConfig = serde_json::from_str(config_json).map_err(|e| e.to_string())?;
    let (train, test) = cfg.datasets()?;
    let test_stacked = test.stacked();
    let prior = estimate_prior(&train, PriorDiagonal::Accuracy).map_err(|e| e.to_string())?;
    let train_stacked = train.stacked();

    let ladder = [0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0];
    let mut points = Vec::new();
    for &lambda2 in &ladder {
        let model = fit(
            &train_stacked,
            &train.labels,
            &prior,
            cfg.lambda1,
            lambda2,
            &SolverOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let fused = predict(&model, &test_stacked).map_err(|e| e.to_string())?;
        let eval = evaluate(&fused, &test.labels, test.mode).map_err(|e| e.to_string())?;
        points.push(serde_json::json!({
            "lambda2": lambda2,
            "sparsity": model.fit_report.sparsity,
            "accuracy": eval.accuracy,
            "map": eval.map,
        }));
    }
    Ok(serde_json::json!({ "points": points }).to_string())
}

#[derive(Deserialize)]
struct LstmDemoConfig {
    #[serde(default = "default_lstm_seed")]
    seed: u64,
    #[serde(default = "default_hidden")]
    hidden: Vec<usize>,
    #[serde(default = "default_seq_len")]
    seq_len: usize,
    #[serde(default = "default_lstm_classes")]
    classes: usize,
    #[serde(default = "default_samples")]
    train_samples: usize,
    #[serde(default = "default_test_samples")]
    test_samples: usize,
    #[serde(default = "default_iters")]
    iters: usize,
    #[serde(default = "default_lr")]
    learning_rate: f64,
}

fn default_lstm_seed() -> u64 {
    1
}
fn default_hidden() -> Vec<usize> {
    vec![12, 8]
}
fn default_seq_len() -> usize {
    12
}
fn default_lstm_classes() -> usize {
    3
}
fn default_samples() -> usize {
    96
}
fn default_test_samples() -> usize {
    64
}
fn default_iters() -> usize {
    800
}
fn default_lr() -> f64 {
    1e-2
}

/// Train a toy LSTM on the majority-symbol task and report its curves.
pub fn lstm_demo_json(config_json: &str) -> Result<String, String> {
    let cfg: LstmDemoConfig = serde_json::from_str(config_json).map_err(|e| e.to_string())?;
    let classes = cfg.classes.clamp(2, 8);
    let seq_len = cfg.seq_len.clamp(2, 40);
    let hidden: Vec<usize> = cfg.hidden.iter().map(|&h| h.clamp(2, 48)).collect();
    if hidden.is_empty() || hidden.len() > 3 {
        return Err("hidden must list 1 to 3 layer sizes".into());
    }

    let train_set = majority_task(cfg.train_samples.clamp(16, 1024), seq_len, classes, cfg.seed);
    let test_set = majority_task(
        cfg.test_samples.clamp(16, 512),
        seq_len,
        classes,
        cfg.seed.wrapping_add(1000),
    );
    let net = init_network(classes, &hidden, classes, cfg.seed.wrapping_add(2000));
    let opts = TrainOptions {
        learning_rate: cfg.learning_rate,
        max_iters: cfg.iters.clamp(1, 20_000),
        stop_train_accuracy: Some(0.99),
        seed: cfg.seed,
        ..TrainOptions::default()
    };
    let (trained, report) = train(&net, &train_set, &opts).map_err(|e| e.to_string())?;
    let test_accuracy = sequence_accuracy(&trained, &test_set).map_err(|e| e.to_string())?;

    let stride = (report.loss_trace.len() / 400).max(1);
    let loss_points: Vec<(usize, f64)> = report
        .loss_trace
        .iter()
        .enumerate()
        .filter(|(i, _)| i % stride == 0 || *i == report.loss_trace.len() - 1)
        .map(|(i, &v)| (i, v))
        .collect();

    Ok(serde_json::json!({
        "iterations": report.iterations,
        "train_accuracy": report.final_train_accuracy,
        "test_accuracy": test_accuracy,
        "loss_trace": loss_points,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn fusion_experiment(config_json: &str) -> Result<String, JsValue> {
    fusion_experiment_json(config_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sparsity_sweep(config_json: &str) -> Result<String, JsValue> {
    sparsity_sweep_json(config_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn lstm_demo(config_json: &str) -> Result<String, JsValue> {
    lstm_demo_json(config_json).map_err(|e| JsValue::from_str(&e))
}
