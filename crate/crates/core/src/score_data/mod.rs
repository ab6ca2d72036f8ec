//! Multi-stream score datasets: validation, stacking, fold splitting, and
//! synthetic generation.
//!
//! A dataset is M streams of per-class prediction scores plus one label
//! matrix. All streams of a dataset share sample count, class count, and
//! sample order; every score lies in `[0, 1]`.

mod io;
mod synth;

pub use io::{
    load_dataset, load_labels, load_manifest, load_scores, save_labels, save_manifest,
    save_scores, DatasetManifest, StreamEntry,
};
pub use synth::{generate_synthetic, SynthConfig};

use ndarray::{Array2, ArrayView2, s};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::argmax_tie_lowest;

/// Whether labels are one positive class per sample or any number of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelMode {
    #[serde(rename = "single")]
    Single,
    #[serde(rename = "multi")]
    Multi,
}

/// Per-class prediction scores from one stream: N samples x C classes,
/// every entry in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub stream_id: String,
    pub scores: Array2<f64>,
    pub sample_ids: Vec<String>,
}

impl ScoreMatrix {
    pub fn new(
        stream_id: impl Into<String>,
        scores: Array2<f64>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        if scores.nrows() != sample_ids.len() {
            return Err(Error::shape(format!(
                "{} score rows but {} sample ids",
                scores.nrows(),
                sample_ids.len()
            )));
        }
        if scores.ncols() == 0 {
            return Err(Error::invalid("score matrix needs at least one class"));
        }
        for &v in scores.iter() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("score out of range [0,1]: {v}")));
            }
        }
        Ok(ScoreMatrix {
            stream_id: stream_id.into(),
            scores,
            sample_ids,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.scores.ncols()
    }

    /// Predicted class of sample `n`; ties go to the lowest class index.
    pub fn argmax(&self, n: usize) -> usize {
        argmax_tie_lowest(self.scores.row(n))
    }
}

/// Binary ground truth: N samples x C classes with entries in {0, 1}.
#[derive(Debug, Clone)]
pub struct LabelMatrix {
    pub labels: Array2<u8>,
    pub class_names: Vec<String>,
}

impl LabelMatrix {
    pub fn new(labels: Array2<u8>, class_names: Vec<String>) -> Result<Self> {
        if labels.ncols() != class_names.len() {
            return Err(Error::shape(format!(
                "{} label columns but {} class names",
                labels.ncols(),
                class_names.len()
            )));
        }
        if labels.iter().any(|&v| v > 1) {
            return Err(Error::invalid("label entries must be 0 or 1"));
        }
        Ok(LabelMatrix {
            labels,
            class_names,
        })
    }

    /// Builds a single-label matrix from class indices.
    pub fn from_classes(classes: &[usize], class_names: Vec<String>) -> Result<Self> {
        let c = class_names.len();
        let mut labels = Array2::<u8>::zeros((classes.len(), c));
        for (n, &cls) in classes.iter().enumerate() {
            if cls >= c {
                return Err(Error::invalid(format!("class index {cls} out of range")));
            }
            labels[[n, cls]] = 1;
        }
        LabelMatrix::new(labels, class_names)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.ncols()
    }

    pub fn positives(&self, n: usize) -> Vec<usize> {
        self.labels
            .row(n)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(c, _)| c)
            .collect()
    }

    /// The single positive class of sample `n`; errors unless exactly one.
    pub fn true_class(&self, n: usize) -> Result<usize> {
        let pos = self.positives(n);
        if pos.len() != 1 {
            return Err(Error::invalid(format!(
                "sample {n} has {} positive classes; expected exactly 1",
                pos.len()
            )));
        }
        Ok(pos[0])
    }

    /// True when every row has exactly one positive entry.
    pub fn is_single_label(&self) -> bool {
        (0..self.n_samples()).all(|n| self.labels.row(n).iter().map(|&v| v as usize).sum::<usize>() == 1)
    }
}

/// Row-wise concatenation of all streams: N x (C*M), column block m holding
/// stream m's C score columns in `stream_order`.
#[derive(Debug, Clone)]
pub struct StackedScores {
    pub matrix: Array2<f64>,
    pub stream_order: Vec<String>,
    pub sample_ids: Vec<String>,
}

impl StackedScores {
    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_streams(&self) -> usize {
        self.stream_order.len()
    }

    pub fn n_classes(&self) -> usize {
        self.matrix.ncols() / self.n_streams()
    }

    /// Column block of stream `m` (its original C score columns).
    pub fn stream_block(&self, m: usize) -> ArrayView2<'_, f64> {
        let c = self.n_classes();
        self.matrix.slice(s![.., m * c..(m + 1) * c])
    }
}

/// Concatenates stream score rows into stacked vectors.
///
/// All streams must agree on shape and sample order.
pub fn stack_streams(streams: &[ScoreMatrix]) -> Result<StackedScores> {
    let first = streams
        .first()
        .ok_or_else(|| Error::invalid("need at least one stream to stack"))?;
    let (n, c) = (first.n_samples(), first.n_classes());
    for s in streams.iter().skip(1) {
        if s.n_samples() != n || s.n_classes() != c {
            return Err(Error::shape(format!(
                "stream {} is {}x{}, expected {}x{}",
                s.stream_id,
                s.n_samples(),
                s.n_classes(),
                n,
                c
            )));
        }
        if s.sample_ids != first.sample_ids {
            return Err(Error::invalid(format!(
                "stream {} sample order differs from stream {}",
                s.stream_id, first.stream_id
            )));
        }
    }
    let m = streams.len();
    let mut matrix = Array2::<f64>::zeros((n, c * m));
    for (mi, s) in streams.iter().enumerate() {
        matrix.slice_mut(s![.., mi * c..(mi + 1) * c]).assign(&s.scores);
    }
    Ok(StackedScores {
        matrix,
        stream_order: streams.iter().map(|s| s.stream_id.clone()).collect(),
        sample_ids: first.sample_ids.clone(),
    })
}

/// One cross-validation fold: disjoint train and validation index sets.
#[derive(Debug, Clone)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// A full multi-stream dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub streams: Vec<ScoreMatrix>,
    pub labels: LabelMatrix,
    pub mode: LabelMode,
}

impl Dataset {
    pub fn new(streams: Vec<ScoreMatrix>, labels: LabelMatrix, mode: LabelMode) -> Result<Self> {
        if streams.is_empty() {
            return Err(Error::invalid("dataset needs at least one stream"));
        }
        let (n, c) = (labels.n_samples(), labels.n_classes());
        for s in &streams {
            if s.n_samples() != n || s.n_classes() != c {
                return Err(Error::shape(format!(
                    "stream {} is {}x{} but labels are {}x{}",
                    s.stream_id,
                    s.n_samples(),
                    s.n_classes(),
                    n,
                    c
                )));
            }
            if s.sample_ids != streams[0].sample_ids {
                return Err(Error::invalid(format!(
                    "stream {} sample order differs from stream {}",
                    s.stream_id, streams[0].stream_id
                )));
            }
        }
        if mode == LabelMode::Single && !labels.is_single_label() {
            return Err(Error::invalid(
                "single-label mode requires exactly one positive class per sample",
            ));
        }
        Ok(Dataset {
            streams,
            labels,
            mode,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.n_samples()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.n_classes()
    }

    pub fn n_streams(&self) -> usize {
        self.streams.len()
    }

    pub fn stacked(&self) -> StackedScores {
        stack_streams(&self.streams).expect("validated dataset always stacks")
    }

    /// Row subset in the given index order (used for fold splits).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let n = self.n_samples();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("subset index {bad} out of range")));
        }
        let streams = self
            .streams
            .iter()
            .map(|s| ScoreMatrix {
                stream_id: s.stream_id.clone(),
                scores: s.scores.select(ndarray::Axis(0), indices),
                sample_ids: indices.iter().map(|&i| s.sample_ids[i].clone()).collect(),
            })
            .collect();
        let labels = LabelMatrix {
            labels: self.labels.labels.select(ndarray::Axis(0), indices),
            class_names: self.labels.class_names.clone(),
        };
        Dataset::new(streams, labels, self.mode)
    }
}

/// Splits sample indices into `k` disjoint folds.
///
/// Single-label datasets are stratified by class; if some class has fewer
/// than `k` samples the split falls back to an unstratified shuffle with a
/// warning. Deterministic given the seed.
pub fn split_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = dataset.n_samples();
    if k < 2 {
        return Err(Error::invalid("fold count must be at least 2"));
    }
    if k > n {
        return Err(Error::invalid(format!("cannot split {n} samples into {k} folds")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_members: Vec<Vec<usize>> = vec![Vec::new(); k];

    let stratify = dataset.mode == LabelMode::Single && {
        let mut counts = vec![0usize; dataset.n_classes()];
        for i in 0..n {
            counts[dataset.labels.true_class(i)?] += 1;
        }
        let ok = counts.iter().all(|&c| c == 0 || c >= k);
        if !ok {
            log::warn!("a class has fewer than {k} samples; falling back to unstratified folds");
        }
        ok
    };

    if stratify {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes()];
        for i in 0..n {
            by_class[dataset.labels.true_class(i)?].push(i);
        }
        // Continue the round-robin across classes so fold sizes stay even.
        let mut cursor = 0usize;
        for indices in by_class.iter_mut() {
            indices.shuffle(&mut rng);
            for &i in indices.iter() {
                fold_members[cursor % k].push(i);
                cursor += 1;
            }
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        for (pos, &i) in all.iter().enumerate() {
            fold_members[pos % k].push(i);
        }
    }

    let folds = fold_members
        .into_iter()
        .map(|mut validation| {
            validation.sort_unstable();
            let in_val: std::collections::HashSet<usize> = validation.iter().copied().collect();
            let train = (0..n).filter(|i| !in_val.contains(i)).collect();
            Fold { train, validation }
        })
        .collect();
    Ok(folds)
}
