//! Reference fusion methods: average, cross-validated linear weights, and
//! unregularized logistic regression.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion_solver::{fit, FusionModel, InitMode, SolverOptions};
use crate::metrics::selection_metric;
use crate::score_data::{split_folds, Dataset, LabelMatrix, ScoreMatrix, StackedScores};

/// A single weight per stream on the simplex.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedFusionModel {
    pub weights: Vec<f64>,
}

/// Entrywise mean across streams.
///
/// Delegates to [`weighted_fusion_apply`] with uniform weights so the two
/// agree bit-for-bit.
pub fn average_fusion(streams: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    if streams.is_empty() {
        return Err(Error::invalid("average fusion needs at least one stream"));
    }
    let uniform = WeightedFusionModel {
        weights: vec![1.0 / streams.len() as f64; streams.len()],
    };
    let mut fused = weighted_fusion_apply(&uniform, streams)?;
    fused.stream_id = "average".into();
    Ok(fused)
}

/// Linear combination of streams with the model's simplex weights.
pub fn weighted_fusion_apply(
    model: &WeightedFusionModel,
    streams: &[ScoreMatrix],
) -> Result<ScoreMatrix> {
    if streams.len() != model.weights.len() {
        return Err(Error::shape(format!(
            "{} streams but {} weights",
            streams.len(),
            model.weights.len()
        )));
    }
    let first = &streams[0];
    let mut acc = ndarray::Array2::<f64>::zeros(first.scores.dim());
    for (s, &w) in streams.iter().zip(&model.weights) {
        if s.scores.dim() != first.scores.dim() || s.sample_ids != first.sample_ids {
            return Err(Error::shape(format!(
                "stream {} does not match stream {}",
                s.stream_id, first.stream_id
            )));
        }
        for (a, &v) in acc.iter_mut().zip(s.scores.iter()) {
            *a += w * v;
        }
    }
    // Convex combinations can drift past 1.0 by an ulp; clamp the drift.
    let acc = acc.mapv(|v| v.clamp(0.0, 1.0));
    ScoreMatrix::new("weighted", acc, first.sample_ids.clone())
}

/// All weight vectors on the simplex grid with the given step, enumerated
/// lexicographically as integer compositions of `1/step`.
fn simplex_grid(n_streams: usize, grid_step: f64) -> Result<Vec<Vec<f64>>> {
    let steps_f = 1.0 / grid_step;
    let steps = steps_f.round() as usize;
    if steps == 0 || (steps as f64 * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "grid step {grid_step} must evenly divide 1"
        )));
    }
    let mut grid = Vec::new();
    let mut counts = vec![0usize; n_streams];
    fn recurse(counts: &mut Vec<usize>, pos: usize, remaining: usize, steps: usize, out: &mut Vec<Vec<f64>>) {
        if pos == counts.len() - 1 {
            counts[pos] = remaining;
            out.push(counts.iter().map(|&k| k as f64 / steps as f64).collect());
            return;
        }
        for k in 0..=remaining {
            counts[pos] = k;
            recurse(counts, pos + 1, remaining - k, steps, out);
        }
    }
    recurse(&mut counts, 0, steps, steps, &mut grid);
    Ok(grid)
}

/// Exhaustive simplex-grid search for per-stream weights, scored by k-fold
/// cross-validation.
///
/// Ties pick the candidate closest to uniform, then the lexicographically
/// smallest. Limited to 4 streams to keep the grid exhaustive.
pub fn weighted_fusion_fit(
    train: &Dataset,
    grid_step: f64,
    k: usize,
    seed: u64,
) -> Result<WeightedFusionModel> {
    let m = train.n_streams();
    if m > 4 {
        return Err(Error::invalid(
            "exhaustive simplex grid supports at most 4 streams",
        ));
    }
    if m == 1 {
        return Ok(WeightedFusionModel { weights: vec![1.0] });
    }
    let candidates = simplex_grid(m, grid_step)?;
    let folds = split_folds(train, k, seed)?;
    let val_parts: Vec<Dataset> = folds
        .iter()
        .map(|f| train.subset(&f.validation))
        .collect::<Result<Vec<_>>>()?;

    let uniform = 1.0 / m as f64;
    let dist_to_uniform = |w: &[f64]| -> f64 {
        w.iter().map(|&v| (v - uniform) * (v - uniform)).sum()
    };

    let mut best: Option<(Vec<f64>, f64, f64)> = None; // weights, score, distance
    for cand in candidates {
        let model = WeightedFusionModel {
            weights: cand.clone(),
        };
        let mut sum = 0.0;
        for part in &val_parts {
            let fused = weighted_fusion_apply(&model, &part.streams)?;
            sum += selection_metric(&fused, &part.labels, part.mode)?;
        }
        let score = sum / val_parts.len() as f64;
        let dist = dist_to_uniform(&cand);
        let better = match &best {
            None => true,
            Some((_, bs, bd)) => score > *bs || (score == *bs && dist < *bd),
        };
        if better {
            best = Some((cand, score, dist));
        }
    }
    let (weights, _, _) = best.expect("non-empty candidate grid");
    Ok(WeightedFusionModel { weights })
}

/// The free-weights baseline: the adaptive solver with both regularizers
/// off and zero initialization.
pub fn plain_logistic_fusion_fit(
    s: &StackedScores,
    y: &LabelMatrix,
    opts: &SolverOptions,
) -> Result<FusionModel> {
    let prior = crate::class_prior::PriorMatrix::zeros(y.n_classes(), s.stream_order.clone());
    let opts = SolverOptions {
        init: InitMode::Zeros,
        ..opts.clone()
    };
    fit(s, y, &prior, 0.0, 0.0, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::accuracy;
    use crate::score_data::{generate_synthetic, LabelMode, SynthConfig};
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stream(id: &str, scores: Array2<f64>) -> ScoreMatrix {
        let ids = (0..scores.nrows()).map(|i| format!("s{i}")).collect();
        ScoreMatrix::new(id, scores, ids).unwrap()
    }

    #[test]
    fn averaging_two_identical_streams_is_identity() {
        let a = stream("a", array![[0.9, 0.1], [0.3, 0.7]]);
        let b = stream("b", array![[0.9, 0.1], [0.3, 0.7]]);
        let fused = average_fusion(&[a.clone(), b]).unwrap();
        assert_eq!(fused.scores, a.scores);
    }

    #[test]
    fn averaging_opposite_streams_gives_halves() {
        let a = stream("a", array![[1.0, 0.0]]);
        let b = stream("b", array![[0.0, 1.0]]);
        let fused = average_fusion(&[a, b]).unwrap();
        assert_eq!(fused.scores, array![[0.5, 0.5]]);
    }

    #[test]
    fn averaging_is_invariant_to_stream_order() {
        let a = stream("a", array![[0.9, 0.1], [0.2, 0.8]]);
        let b = stream("b", array![[0.4, 0.6], [0.5, 0.5]]);
        let c = stream("c", array![[0.1, 0.9], [0.7, 0.3]]);
        let abc = average_fusion(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let cba = average_fusion(&[c, b, a]).unwrap();
        for (x, y) in abc.scores.iter().zip(cba.scores.iter()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn uniform_weights_match_average_bit_for_bit() {
        let a = stream("a", array![[0.9, 0.1], [0.23, 0.77]]);
        let b = stream("b", array![[0.41, 0.59], [0.5, 0.5]]);
        let c = stream("c", array![[0.11, 0.89], [0.67, 0.33]]);
        let streams = [a, b, c];
        let avg = average_fusion(&streams).unwrap();
        let model = WeightedFusionModel {
            weights: vec![1.0 / 3.0; 3],
        };
        let weighted = weighted_fusion_apply(&model, &streams).unwrap();
        assert_eq!(avg.scores, weighted.scores);
    }

    #[test]
    fn one_hot_weights_select_a_stream() {
        let a = stream("a", array![[0.9, 0.1]]);
        let b = stream("b", array![[0.2, 0.8]]);
        let model = WeightedFusionModel {
            weights: vec![0.0, 1.0],
        };
        let fused = weighted_fusion_apply(&model, &[a, b.clone()]).unwrap();
        assert_eq!(fused.scores, b.scores);
    }

    #[test]
    fn simplex_outputs_stay_in_unit_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let streams: Vec<ScoreMatrix> = (0..3)
            .map(|i| stream(&format!("s{i}"), Array2::from_shape_fn((10, 4), |_| rng.gen())))
            .collect();
        let model = WeightedFusionModel {
            weights: vec![0.2, 0.5, 0.3],
        };
        let fused = weighted_fusion_apply(&model, &streams).unwrap();
        assert!(fused.scores.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn grid_enumeration_with_half_steps() {
        let grid = simplex_grid(2, 0.5).unwrap();
        assert_eq!(
            grid,
            vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]
        );
        assert!(simplex_grid(2, 0.3).is_err());
    }

    #[test]
    fn single_stream_weight_is_one() {
        let cfg = SynthConfig::staggered(30, 10, 3, 1, 0.9, 0.9, 2);
        let (train, _) = generate_synthetic(&cfg).unwrap();
        let model = weighted_fusion_fit(&train, 0.1, 3, 0).unwrap();
        assert_eq!(model.weights, vec![1.0]);
    }

    #[test]
    fn informative_stream_dominates_noise() {
        // Stream 0 always ranks the true class first but with a soft margin,
        // so mixing in the noise stream actually costs accuracy; stream 1 is
        // uninformative.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 60;
        let c = 3;
        let classes: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let mut perfect = Array2::<f64>::from_elem((n, c), 0.3);
        for (i, &cl) in classes.iter().enumerate() {
            perfect[[i, cl]] = 0.4;
        }
        let mut noise = Array2::<f64>::zeros((n, c));
        for i in 0..n {
            let mut row: Vec<f64> = (0..c).map(|_| rng.gen::<f64>()).collect();
            let sum: f64 = row.iter().sum();
            for (j, v) in row.iter_mut().enumerate() {
                noise[[i, j]] = *v / sum;
            }
        }
        let labels = LabelMatrix::from_classes(
            &classes,
            (0..c).map(|j| format!("c{j}")).collect(),
        )
        .unwrap();
        let train = Dataset::new(
            vec![stream("perfect", perfect), stream("noise", noise)],
            labels,
            LabelMode::Single,
        )
        .unwrap();
        let model = weighted_fusion_fit(&train, 0.25, 3, 5).unwrap();
        assert!(
            model.weights[0] >= 0.75,
            "perfect stream weight {:.2}",
            model.weights[0]
        );
    }

    #[test]
    fn plain_logistic_equals_unregularized_fit() {
        let cfg = SynthConfig::staggered(50, 10, 3, 2, 0.85, 0.6, 23);
        let (train, _) = generate_synthetic(&cfg).unwrap();
        let stacked = train.stacked();
        let opts = SolverOptions::default();
        let plain = plain_logistic_fusion_fit(&stacked, &train.labels, &opts).unwrap();
        let zero_prior =
            crate::class_prior::PriorMatrix::zeros(3, stacked.stream_order.clone());
        let direct = fit(
            &stacked,
            &train.labels,
            &zero_prior,
            0.0,
            0.0,
            &SolverOptions {
                init: InitMode::Zeros,
                ..opts
            },
        )
        .unwrap();
        let a = *plain.fit_report.objective_trace.last().unwrap();
        let b = *direct.fit_report.objective_trace.last().unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));

        let trace = &plain.fit_report.objective_trace;
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn logistic_fusion_beats_single_streams_on_separable_data() {
        let cfg = SynthConfig::staggered(80, 10, 4, 2, 0.95, 0.75, 31);
        let (train, _) = generate_synthetic(&cfg).unwrap();
        let stacked = train.stacked();
        let model = plain_logistic_fusion_fit(&stacked, &train.labels, &SolverOptions::default())
            .unwrap();
        let fused = crate::fusion_solver::predict(&model, &stacked).unwrap();
        let fused_acc = accuracy(&fused, &train.labels).unwrap();
        for s in &train.streams {
            let stream_acc = accuracy(s, &train.labels).unwrap();
            assert!(
                fused_acc >= stream_acc,
                "fused {fused_acc:.3} below stream {} at {stream_acc:.3}",
                s.stream_id
            );
        }
    }
}
