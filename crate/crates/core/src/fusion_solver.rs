//! Class-adaptive fusion weights via proximal gradient descent.
//!
//! The model scores class c of a stacked sample s as `sigma(s . w_c)` and is
//! fit by minimizing
//!
//! ```text
//! F(W) = sum_{n,c} ln(1 + exp((1 - 2 y_{n,c}) s_n . w_c))
//!        + lambda1 ||W - V||_F^2 + lambda2 ||W||_1
//! ```
//!
//! where V is the stacked class-confusion prior. The smooth part (loss plus
//! Frobenius pull toward V) is handled by gradient steps, the l1 part by its
//! proximal operator (entrywise soft-thresholding), with a backtracking line
//! search supplying the step size the plain update rule omits. All
//! reductions run left-to-right over samples, so a fit is bit-reproducible
//! given identical inputs and options.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::class_prior::{PriorDiagonal, PriorMatrix};
use crate::error::{Error, Result};
use crate::metrics::selection_metric;
use crate::numeric::{log1p_exp, sigmoid};
use crate::parallel;
use crate::score_data::{split_folds, Dataset, LabelMatrix, ScoreMatrix, StackedScores};

/// Where the solver starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    /// Start at the prior V, the regularizer's anchor.
    #[serde(rename = "prior")]
    Prior,
    #[serde(rename = "zeros")]
    Zeros,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior" => Ok(InitMode::Prior),
            "zeros" => Ok(InitMode::Zeros),
            other => Err(Error::invalid(format!("unknown init mode {other:?}; use prior or zeros"))),
        }
    }
}

/// Proximal-gradient solver options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop when the objective decrease falls below `rel_tol * max(1, |F|)`.
    pub rel_tol: f64,
    /// Initial step size; the line search adapts it from there.
    pub step_size: f64,
    /// Backtracking shrink factor in (0, 1).
    pub backtrack: f64,
    /// Sufficient-decrease constant of the line search.
    pub armijo: f64,
    pub init: InitMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 10_000,
            rel_tol: 1e-8,
            step_size: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            init: InitMode::Prior,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::invalid("step size must be positive"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::invalid("backtracking factor must lie in (0, 1)"));
        }
        if !(self.armijo >= 0.0) {
            return Err(Error::invalid("armijo constant must be non-negative"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        Ok(())
    }
}

/// Per-fit diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    /// Objective value before the first step and after every accepted one.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_step_size: f64,
    /// Fraction of exactly-zero entries in W.
    pub sparsity: f64,
}

/// A fitted fusion model: the (C*M) x C weight matrix plus everything used
/// to fit it.
#[derive(Debug, Clone)]
pub struct FusionModel {
    pub weights: Array2<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub prior: PriorMatrix,
    pub stream_order: Vec<String>,
    pub fit_report: FitReport,
}

fn check_shapes(w: &Array2<f64>, s: &StackedScores, y: &LabelMatrix) -> Result<()> {
    let (n, cm) = s.matrix.dim();
    if y.n_samples() != n {
        return Err(Error::shape(format!(
            "{n} stacked rows but {} label rows",
            y.n_samples()
        )));
    }
    if w.nrows() != cm || w.ncols() != y.n_classes() {
        return Err(Error::shape(format!(
            "weights are {:?}, expected ({cm}, {})",
            w.dim(),
            y.n_classes()
        )));
    }
    Ok(())
}

fn check_finite(w: &Array2<f64>, what: &str) -> Result<()> {
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite entries")));
    }
    Ok(())
}

/// Row-major view of a matrix, copying only when the layout is not
/// already contiguous.
fn row_major<T: Copy>(a: &Array2<T>) -> std::borrow::Cow<'_, [T]> {
    match a.as_slice() {
        Some(slice) => std::borrow::Cow::Borrowed(slice),
        None => std::borrow::Cow::Owned(a.iter().copied().collect()),
    }
}

/// Margins Z = S W, accumulated left-to-right over the stacked columns.
///
/// Hand-rolled with contiguous slices: the reduction order is part of the
/// determinism contract, and the matrices are small enough that a tuned
/// BLAS buys nothing.
fn margins(w: &Array2<f64>, s: &StackedScores) -> Array2<f64> {
    let (n, cm) = s.matrix.dim();
    let c = w.ncols();
    let s_flat = row_major(&s.matrix);
    let w_flat = row_major(w);
    let mut z = vec![0.0_f64; n * c];
    for i in 0..n {
        let s_row = &s_flat[i * cm..(i + 1) * cm];
        let z_row = &mut z[i * c..(i + 1) * c];
        for (j, &sv) in s_row.iter().enumerate() {
            let w_row = &w_flat[j * c..(j + 1) * c];
            for (zv, &wv) in z_row.iter_mut().zip(w_row) {
                *zv += sv * wv;
            }
        }
    }
    Array2::from_shape_vec((n, c), z).expect("shape matches")
}

/// Summed logistic loss `sum_{n,c} ln(1 + exp((1 - 2 y) s . w_c))`.
pub fn logistic_loss(w: &Array2<f64>, s: &StackedScores, y: &LabelMatrix) -> Result<f64> {
    check_shapes(w, s, y)?;
    check_finite(w, "weight matrix")?;
    let z = margins(w, s);
    let z_flat = row_major(&z);
    let y_flat = row_major(&y.labels);
    let mut total = 0.0;
    for (&zv, &yv) in z_flat.iter().zip(y_flat.iter()) {
        let sign = 1.0 - 2.0 * f64::from(yv);
        total += log1p_exp(sign * zv);
    }
    Ok(total)
}

/// Full objective: loss + lambda1 ||W - V||_F^2 + lambda2 ||W||_1.
pub fn objective(
    w: &Array2<f64>,
    s: &StackedScores,
    y: &LabelMatrix,
    v: &Array2<f64>,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    if lambda1 < 0.0 || lambda2 < 0.0 {
        return Err(Error::invalid("regularization strengths must be non-negative"));
    }
    if v.dim() != w.dim() {
        return Err(Error::shape(format!(
            "prior is {:?} but weights are {:?}",
            v.dim(),
            w.dim()
        )));
    }
    let loss = logistic_loss(w, s, y)?;
    let mut fro = 0.0;
    let mut l1 = 0.0;
    for (wv, vv) in w.iter().zip(v.iter()) {
        let d = wv - vv;
        fro += d * d;
        l1 += wv.abs();
    }
    Ok(loss + lambda1 * fro + lambda2 * l1)
}

/// Gradient of the smooth part g = loss + lambda1 ||W - V||_F^2:
/// column c gets `sum_n (1 - 2 y) sigma((1 - 2 y) s . w_c) s_n + 2 lambda1 (w_c - v_c)`.
pub fn smooth_gradient(
    w: &Array2<f64>,
    s: &StackedScores,
    y: &LabelMatrix,
    v: &Array2<f64>,
    lambda1: f64,
) -> Result<Array2<f64>> {
    check_shapes(w, s, y)?;
    check_finite(w, "weight matrix")?;
    if v.dim() != w.dim() {
        return Err(Error::shape(format!(
            "prior is {:?} but weights are {:?}",
            v.dim(),
            w.dim()
        )));
    }
    let z = margins(w, s);
    let (n, c) = z.dim();
    let cm = w.nrows();

    // Residual R[n][c] = (1 - 2y) sigma((1 - 2y) z).
    let z_flat = row_major(&z);
    let y_flat = row_major(&y.labels);
    let residual: Vec<f64> = z_flat
        .iter()
        .zip(y_flat.iter())
        .map(|(&zv, &yv)| {
            let sign = 1.0 - 2.0 * f64::from(yv);
            sign * sigmoid(sign * zv)
        })
        .collect();

    // grad = S^T R, samples accumulated in ascending order.
    let s_flat = row_major(&s.matrix);
    let mut grad = vec![0.0_f64; cm * c];
    for i in 0..n {
        let s_row = &s_flat[i * cm..(i + 1) * cm];
        let r_row = &residual[i * c..(i + 1) * c];
        for (j, &sv) in s_row.iter().enumerate() {
            let g_row = &mut grad[j * c..(j + 1) * c];
            for (gv, &rv) in g_row.iter_mut().zip(r_row) {
                *gv += sv * rv;
            }
        }
    }
    let mut grad = Array2::from_shape_vec((cm, c), grad).expect("shape matches");
    if lambda1 != 0.0 {
        for ((gv, &wv), &vv) in grad.iter_mut().zip(w.iter()).zip(v.iter()) {
            *gv += 2.0 * lambda1 * (wv - vv);
        }
    }
    Ok(grad)
}

/// Entrywise soft-thresholding, the exact proximal operator of
/// `tau * ||.||_1`: sign(x) * max(|x| - tau, 0).
pub fn soft_threshold(x: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    if tau < 0.0 {
        return Err(Error::invalid("threshold must be non-negative"));
    }
    Ok(x.mapv(|v| soft_threshold_scalar(v, tau)))
}

pub fn soft_threshold_scalar(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Fits the fusion weights by proximal gradient descent.
///
/// Each iteration takes W <- soft_threshold(W - eta grad g(W), eta lambda2),
/// backtracking on eta until `F(W+) <= F(W) - armijo / eta * ||W+ - W||^2`.
/// The accepted step carries over (with one growth retry) to the next
/// iteration. Stops on the relative-decrease tolerance or `max_iters`.
pub fn fit(
    s: &StackedScores,
    y: &LabelMatrix,
    prior: &PriorMatrix,
    lambda1: f64,
    lambda2: f64,
    opts: &SolverOptions,
) -> Result<FusionModel> {
    opts.validate()?;
    if s.n_samples() == 0 {
        return Err(Error::invalid("cannot fit on an empty dataset"));
    }
    let v = &prior.stacked;
    let mut w = match opts.init {
        InitMode::Prior => v.clone(),
        InitMode::Zeros => Array2::zeros(v.dim()),
    };
    let mut f = objective(&w, s, y, v, lambda1, lambda2)?;
    if !f.is_finite() {
        return Err(Error::numerical(
            "initial objective is not finite; check score scaling",
        ));
    }

    let mut eta = opts.step_size;
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        let grad = smooth_gradient(&w, s, y, v, lambda1)?;

        // Retry a larger step once per iteration so an early conservative
        // eta does not throttle the whole run.
        eta /= opts.backtrack;
        let mut accepted: Option<(Array2<f64>, f64)> = None;
        while eta >= 1e-20 {
            let mut candidate = Array2::<f64>::zeros(w.dim());
            for ((cv, &wv), &gv) in candidate.iter_mut().zip(w.iter()).zip(grad.iter()) {
                *cv = soft_threshold_scalar(wv - eta * gv, eta * lambda2);
            }
            let f_cand = objective(&candidate, s, y, v, lambda1, lambda2)?;
            let dist2: f64 = candidate
                .iter()
                .zip(w.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if f_cand.is_finite() && f_cand <= f - opts.armijo / eta * dist2 {
                accepted = Some((candidate, f_cand));
                break;
            }
            eta *= opts.backtrack;
        }

        iterations += 1;
        let Some((w_next, f_next)) = accepted else {
            // No step of any size improves the objective: we are at the
            // numerical optimum.
            converged = true;
            break;
        };
        let decrease = f - f_next;
        w = w_next;
        f = f_next;
        trace.push(f);
        if decrease <= opts.rel_tol * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    if !f.is_finite() {
        return Err(Error::numerical("objective became non-finite during fit"));
    }
    let zeros = w.iter().filter(|&&v| v == 0.0).count();
    let sparsity = zeros as f64 / w.len() as f64;
    Ok(FusionModel {
        weights: w,
        lambda1,
        lambda2,
        prior: prior.clone(),
        stream_order: s.stream_order.clone(),
        fit_report: FitReport {
            objective_trace: trace,
            iterations,
            converged,
            final_step_size: eta,
            sparsity,
        },
    })
}

/// Fused posterior: entrywise `sigma(s . w_c)`, emitted as stream "fused".
pub fn predict(model: &FusionModel, s: &StackedScores) -> Result<ScoreMatrix> {
    if s.matrix.ncols() != model.weights.nrows() {
        return Err(Error::shape(format!(
            "stacked scores have {} columns but the model expects {}",
            s.matrix.ncols(),
            model.weights.nrows()
        )));
    }
    let fused = margins(&model.weights, s).mapv(sigmoid);
    ScoreMatrix::new("fused", fused, s.sample_ids.clone())
}

/// Grid scores and the refit model from cross-validated lambda1 selection.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub best_lambda1: f64,
    pub model: FusionModel,
    /// (lambda1, mean validation metric) per grid point, in grid order.
    pub grid_scores: Vec<(f64, f64)>,
}

/// The lambda1 grid reported with the method: {1e-5, 1e-4, 1e-3, 1e-2}.
pub const DEFAULT_LAMBDA1_GRID: [f64; 4] = [1e-5, 1e-4, 1e-3, 1e-2];

/// Fixed sparsity strength used alongside the grid.
pub const DEFAULT_LAMBDA2: f64 = 1e-3;

/// Selects lambda1 by k-fold cross-validation and refits on all data.
///
/// Each fold estimates its prior from that fold's training portion only;
/// the refit uses a full-train prior. The fold metric is accuracy in
/// single-label mode and mAP in multi-label mode. Ties pick the smaller
/// lambda1.
pub fn cross_validate(
    train: &Dataset,
    lambda1_grid: &[f64],
    lambda2: f64,
    k: usize,
    seed: u64,
    opts: &SolverOptions,
    diagonal: PriorDiagonal,
) -> Result<CvOutcome> {
    if lambda1_grid.is_empty() {
        return Err(Error::invalid("lambda1 grid must be non-empty"));
    }
    let folds = split_folds(train, k, seed)?;

    struct FoldParts {
        train_stacked: StackedScores,
        train_labels: LabelMatrix,
        prior: PriorMatrix,
        val_stacked: StackedScores,
        val_labels: LabelMatrix,
    }
    let parts = folds
        .iter()
        .map(|fold| {
            let tr = train.subset(&fold.train)?;
            let va = train.subset(&fold.validation)?;
            Ok(FoldParts {
                train_stacked: tr.stacked(),
                train_labels: tr.labels.clone(),
                prior: crate::class_prior::estimate_prior(&tr, diagonal)?,
                val_stacked: va.stacked(),
                val_labels: va.labels.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // One task per (lambda1, fold) pair; results reduce in index order.
    let n_tasks = lambda1_grid.len() * parts.len();
    let task_results: Vec<Result<f64>> = parallel::map_indexed(n_tasks, |t| {
        let lambda1 = lambda1_grid[t / parts.len()];
        let part = &parts[t % parts.len()];
        let model = fit(
            &part.train_stacked,
            &part.train_labels,
            &part.prior,
            lambda1,
            lambda2,
            opts,
        )?;
        let fused = predict(&model, &part.val_stacked)?;
        selection_metric(&fused, &part.val_labels, train.mode)
    });

    let mut grid_scores = Vec::with_capacity(lambda1_grid.len());
    for (gi, &lambda1) in lambda1_grid.iter().enumerate() {
        let mut sum = 0.0;
        for fi in 0..parts.len() {
            sum += match &task_results[gi * parts.len() + fi] {
                Ok(v) => *v,
                Err(e) => return Err(Error::invalid(format!("fold evaluation failed: {e}"))),
            };
        }
        grid_scores.push((lambda1, sum / parts.len() as f64));
    }

    let mut best = grid_scores[0];
    for &(lambda1, score) in &grid_scores[1..] {
        if score > best.1 || (score == best.1 && lambda1 < best.0) {
            best = (lambda1, score);
        }
    }

    let prior = crate::class_prior::estimate_prior(train, diagonal)?;
    let model = fit(&train.stacked(), &train.labels, &prior, best.0, lambda2, opts)?;
    Ok(CvOutcome {
        best_lambda1: best.0,
        model,
        grid_scores,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    stream_order: Vec<String>,
    #[serde(rename = "C")]
    n_classes: usize,
    #[serde(rename = "M")]
    n_streams: usize,
    lambda1: f64,
    lambda2: f64,
    #[serde(rename = "W")]
    weights: Vec<Vec<f64>>,
    prior_diagonal: PriorDiagonal,
}

impl FusionModel {
    /// Pinned model-file schema: stream order, dims, lambdas, row-major W,
    /// and the prior diagonal convention.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            stream_order: self.stream_order.clone(),
            n_classes: self.weights.ncols(),
            n_streams: self.stream_order.len(),
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            weights: self.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            prior_diagonal: self.prior.diagonal,
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<FusionModel> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("model JSON: {e}")))?;
        let rows = file.n_classes * file.n_streams;
        if file.weights.len() != rows || file.weights.iter().any(|r| r.len() != file.n_classes) {
            return Err(Error::shape(format!(
                "model weights must be {}x{}",
                rows, file.n_classes
            )));
        }
        let mut weights = Array2::<f64>::zeros((rows, file.n_classes));
        for (i, row) in file.weights.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                weights[[i, j]] = v;
            }
        }
        check_finite(&weights, "model weights")?;
        let mut prior = PriorMatrix::zeros(file.n_classes, file.stream_order.clone());
        prior.diagonal = file.prior_diagonal;
        Ok(FusionModel {
            weights,
            lambda1: file.lambda1,
            lambda2: file.lambda2,
            prior,
            stream_order: file.stream_order,
            fit_report: FitReport {
                objective_trace: Vec::new(),
                iterations: 0,
                converged: true,
                final_step_size: 0.0,
                sparsity: 0.0,
            },
        })
    }
}
