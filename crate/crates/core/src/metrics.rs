//! Classification accuracy, per-class average precision, and mAP.
//!
//! AP is the non-interpolated precision-at-positive-ranks average: sort by
//! score descending with ties kept in original order, then average the
//! precision at each positive's rank. This convention is deterministic and
//! invariant under strictly monotonic score transforms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::score_data::{LabelMatrix, LabelMode, ScoreMatrix};

/// Evaluation summary for one predictor.
///
/// `accuracy` is only present in single-label mode. Classes without
/// positives are excluded from the mAP mean and reported as NaN (JSON null)
/// in `per_class_ap`.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub per_class_ap: Vec<f64>,
    pub map: f64,
}

/// Fraction of samples whose argmax prediction (ties to the lowest index)
/// equals the true class. Single-label only.
pub fn accuracy(pred: &ScoreMatrix, labels: &LabelMatrix) -> Result<f64> {
    let n = pred.n_samples();
    if labels.n_samples() != n || labels.n_classes() != pred.n_classes() {
        return Err(Error::shape(format!(
            "predictions are {}x{} but labels are {}x{}",
            n,
            pred.n_classes(),
            labels.n_samples(),
            labels.n_classes()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("cannot score an empty prediction set"));
    }
    if !labels.is_single_label() {
        return Err(Error::invalid("accuracy requires single-label data"));
    }
    let mut hits = 0usize;
    for i in 0..n {
        if pred.argmax(i) == labels.true_class(i)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

/// Average precision of a score vector against binary relevance.
///
/// Errors when there is no positive; the caller decides how to treat such
/// classes.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::shape(format!(
            "{} scores but {} relevance flags",
            scores.len(),
            positives.len()
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let total_positives = positives.iter().filter(|&&p| p).count();
    if total_positives == 0 {
        return Err(Error::invalid("average precision needs at least one positive"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort by descending score keeps equal scores in original order.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if positives[idx] {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / total_positives as f64)
}

/// Per-class AP over label columns plus their mean.
///
/// Classes with no positive samples are skipped with a warning and set to
/// NaN in the per-class vector; the mean runs over the remaining classes.
pub fn mean_ap(pred: &ScoreMatrix, labels: &LabelMatrix) -> Result<EvalReport> {
    let c = pred.n_classes();
    if labels.n_samples() != pred.n_samples() || labels.n_classes() != c {
        return Err(Error::shape(format!(
            "predictions are {}x{} but labels are {}x{}",
            pred.n_samples(),
            c,
            labels.n_samples(),
            labels.n_classes()
        )));
    }
    let mut per_class = vec![f64::NAN; c];
    let mut sum = 0.0;
    let mut included = 0usize;
    for class in 0..c {
        let scores: Vec<f64> = pred.scores.column(class).to_vec();
        let positives: Vec<bool> = labels.labels.column(class).iter().map(|&v| v == 1).collect();
        if !positives.iter().any(|&p| p) {
            log::warn!("class {class} has no positives; excluded from mAP");
            continue;
        }
        let ap = average_precision(&scores, &positives)?;
        per_class[class] = ap;
        sum += ap;
        included += 1;
    }
    if included == 0 {
        return Err(Error::invalid("no class has a positive sample"));
    }
    Ok(EvalReport {
        accuracy: None,
        per_class_ap: per_class,
        map: sum / included as f64,
    })
}

/// Full report for the dataset's mode: AP/mAP always, accuracy when
/// single-label.
pub fn evaluate(pred: &ScoreMatrix, labels: &LabelMatrix, mode: LabelMode) -> Result<EvalReport> {
    let mut report = mean_ap(pred, labels)?;
    if mode == LabelMode::Single {
        report.accuracy = Some(accuracy(pred, labels)?);
    }
    Ok(report)
}

/// The scalar model-selection metric for a mode: accuracy for single-label,
/// mAP for multi-label.
pub fn selection_metric(pred: &ScoreMatrix, labels: &LabelMatrix, mode: LabelMode) -> Result<f64> {
    match mode {
        LabelMode::Single => accuracy(pred, labels),
        LabelMode::Multi => Ok(mean_ap(pred, labels)?.map),
    }
}
