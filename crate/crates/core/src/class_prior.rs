//! Class-confusion priors.
//!
//! For each stream, a C x C matrix counts how often class-i samples get
//! argmax-predicted as class j. Stacked across streams, the (C*M) x C
//! result anchors the fusion weights: row `m*C + i` of the stack addresses
//! the same (stream, source-class) pair as column `m*C + i` of the stacked
//! scores and row `m*C + i` of the weight matrix.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score_data::{Dataset, LabelMatrix, LabelMode, ScoreMatrix};

/// What to put on the confusion diagonal.
///
/// `Accuracy` stores the correct-classification rate, making each row a
/// probability distribution. `Zero` keeps only the off-diagonal confusion
/// fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorDiagonal {
    #[serde(rename = "accuracy")]
    Accuracy,
    #[serde(rename = "zero")]
    Zero,
}

impl std::str::FromStr for PriorDiagonal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(PriorDiagonal::Accuracy),
            "zero" => Ok(PriorDiagonal::Zero),
            other => Err(Error::invalid(format!(
                "unknown prior diagonal {other:?}; use accuracy or zero"
            ))),
        }
    }
}

/// Per-stream confusion matrices plus their (C*M) x C stack.
#[derive(Debug, Clone)]
pub struct PriorMatrix {
    pub per_stream: Vec<Array2<f64>>,
    pub stacked: Array2<f64>,
    pub stream_order: Vec<String>,
    pub diagonal: PriorDiagonal,
}

impl PriorMatrix {
    /// All-zero prior, the anchor used when no confusion estimate exists.
    pub fn zeros(n_classes: usize, stream_order: Vec<String>) -> PriorMatrix {
        let m = stream_order.len();
        PriorMatrix {
            per_stream: (0..m).map(|_| Array2::zeros((n_classes, n_classes))).collect(),
            stacked: Array2::zeros((n_classes * m, n_classes)),
            stream_order,
            diagonal: PriorDiagonal::Accuracy,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.stacked.ncols()
    }

    pub fn n_streams(&self) -> usize {
        self.stream_order.len()
    }
}

/// Confusion matrix of one stream against ground truth.
///
/// Entry (i, j) is the fraction of class-i samples whose argmax prediction
/// is class j; in multi-label mode each positive class of a sample
/// contributes once, with the same argmax prediction. Classes with no
/// samples get an all-zero row and a logged warning.
pub fn confusion_matrix(
    scores: &ScoreMatrix,
    labels: &LabelMatrix,
    mode: LabelMode,
    diagonal: PriorDiagonal,
) -> Result<Array2<f64>> {
    let n = scores.n_samples();
    let c = scores.n_classes();
    if n == 0 {
        return Err(Error::invalid("cannot estimate confusion from an empty dataset"));
    }
    if labels.n_samples() != n || labels.n_classes() != c {
        return Err(Error::shape(format!(
            "scores are {}x{} but labels are {}x{}",
            n,
            c,
            labels.n_samples(),
            labels.n_classes()
        )));
    }

    let mut counts = Array2::<f64>::zeros((c, c));
    let mut totals = vec![0.0_f64; c];
    for i in 0..n {
        let pred = scores.argmax(i);
        match mode {
            LabelMode::Single => {
                let truth = labels.true_class(i)?;
                counts[[truth, pred]] += 1.0;
                totals[truth] += 1.0;
            }
            LabelMode::Multi => {
                let positives = labels.positives(i);
                if positives.is_empty() {
                    return Err(Error::invalid(format!(
                        "multi-label sample {i} has no positive class"
                    )));
                }
                for truth in positives {
                    counts[[truth, pred]] += 1.0;
                    totals[truth] += 1.0;
                }
            }
        }
    }

    let mut v = Array2::<f64>::zeros((c, c));
    for i in 0..c {
        if totals[i] == 0.0 {
            log::warn!("class {i} has no samples; its confusion row stays zero");
            continue;
        }
        for j in 0..c {
            v[[i, j]] = counts[[i, j]] / totals[i];
        }
        if diagonal == PriorDiagonal::Zero {
            v[[i, i]] = 0.0;
        }
    }
    Ok(v)
}

/// Stacks per-stream confusion matrices into a (C*M) x C prior, block m
/// holding stream m's matrix.
pub fn stack_priors(
    per_stream: Vec<Array2<f64>>,
    stream_order: Vec<String>,
    diagonal: PriorDiagonal,
) -> Result<PriorMatrix> {
    if per_stream.is_empty() {
        return Err(Error::invalid("need at least one confusion matrix"));
    }
    if per_stream.len() != stream_order.len() {
        return Err(Error::shape(format!(
            "{} matrices but {} stream ids",
            per_stream.len(),
            stream_order.len()
        )));
    }
    let c = per_stream[0].nrows();
    for (m, v) in per_stream.iter().enumerate() {
        if v.dim() != (c, c) {
            return Err(Error::shape(format!(
                "confusion matrix {m} is {:?}, expected ({c}, {c})",
                v.dim()
            )));
        }
    }
    let m = per_stream.len();
    let mut stacked = Array2::<f64>::zeros((c * m, c));
    for (mi, v) in per_stream.iter().enumerate() {
        stacked.slice_mut(s![mi * c..(mi + 1) * c, ..]).assign(v);
    }
    Ok(PriorMatrix {
        per_stream,
        stacked,
        stream_order,
        diagonal,
    })
}

/// Estimates one confusion matrix per stream and stacks them.
///
/// Estimating from held-out predictions avoids the optimistic bias of
/// training scores; when only training scores exist they are used as-is.
pub fn estimate_prior(dataset: &Dataset, diagonal: PriorDiagonal) -> Result<PriorMatrix> {
    let per_stream = dataset
        .streams
        .iter()
        .map(|s| confusion_matrix(s, &dataset.labels, dataset.mode, diagonal))
        .collect::<Result<Vec<_>>>()?;
    let order = dataset.streams.iter().map(|s| s.stream_id.clone()).collect();
    stack_priors(per_stream, order, diagonal)
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    stream_order: Vec<String>,
    per_stream: Vec<Vec<Vec<f64>>>,
    #[serde(default = "default_diagonal")]
    diagonal: PriorDiagonal,
}

fn default_diagonal() -> PriorDiagonal {
    PriorDiagonal::Accuracy
}

impl PriorMatrix {
    pub fn to_json(&self) -> String {
        let file = PriorFile {
            stream_order: self.stream_order.clone(),
            per_stream: self
                .per_stream
                .iter()
                .map(|v| v.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
            diagonal: self.diagonal,
        };
        serde_json::to_string_pretty(&file).expect("prior serializes")
    }

    pub fn from_json(text: &str) -> Result<PriorMatrix> {
        let file: PriorFile =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("prior JSON: {e}")))?;
        let matrices = file
            .per_stream
            .iter()
            .map(|rows| {
                let c = rows.len();
                if rows.iter().any(|r| r.len() != c) {
                    return Err(Error::shape("prior matrices must be square"));
                }
                let mut a = Array2::<f64>::zeros((c, c));
                for (i, row) in rows.iter().enumerate() {
                    for (j, &val) in row.iter().enumerate() {
                        a[[i, j]] = val;
                    }
                }
                Ok(a)
            })
            .collect::<Result<Vec<_>>>()?;
        stack_priors(matrices, file.stream_order, file.diagonal)
    }
}
