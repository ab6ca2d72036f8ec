//! Mini-batch training with momentum, plus the majority-symbol toy task.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;

use super::{classify, loss_and_gradients, LstmLayerParams, LstmNetwork, SequenceSample};

/// Mini-batch SGD options.
///
/// The paper-scale settings (1024/512 hidden units, 1e-4 learning rate,
/// 150k iterations) exist only as documentation; these defaults target toy
/// problems that train in seconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub max_iters: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop early once training accuracy reaches this level (checked every
    /// `eval_every` iterations).
    pub stop_train_accuracy: Option<f64>,
    pub eval_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            learning_rate: 1e-2,
            momentum: 0.9,
            grad_clip: 5.0,
            max_iters: 5_000,
            batch_size: 16,
            seed: 0,
            stop_train_accuracy: None,
            eval_every: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    /// Mean batch loss per iteration.
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub final_train_accuracy: f64,
}

/// Uniform [-0.08, 0.08] weights, zero biases except the forget gate at +1.
///
/// Draw order is fixed: per layer the gate matrices (xi, hi, xf, hf, xc,
/// hc, xo, ho) then the peepholes (ci, cf, co), then the head.
pub fn init_network(input_dim: usize, hidden_dims: &[usize], n_classes: usize, seed: u64) -> LstmNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, cols: usize| -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-0.08..0.08))
    };
    let mut layers = Vec::new();
    let mut prev = input_dim;
    for &h in hidden_dims {
        let mut layer = LstmLayerParams::zeros(prev, h);
        layer.w_xi = draw(h, prev);
        layer.w_hi = draw(h, h);
        layer.w_xf = draw(h, prev);
        layer.w_hf = draw(h, h);
        layer.w_xc = draw(h, prev);
        layer.w_hc = draw(h, h);
        layer.w_xo = draw(h, prev);
        layer.w_ho = draw(h, h);
        layer.w_ci = draw(1, h).row(0).to_owned();
        layer.w_cf = draw(1, h).row(0).to_owned();
        layer.w_co = draw(1, h).row(0).to_owned();
        layer.b_f.fill(1.0);
        layers.push(layer);
        prev = h;
    }
    let head_u = draw(n_classes, prev);
    LstmNetwork {
        layers,
        head_u,
        head_b: Array1::zeros(n_classes),
    }
}

/// Fraction of sequences whose predicted class matches the label.
pub fn sequence_accuracy(net: &LstmNetwork, samples: &[SequenceSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot score an empty sample set"));
    }
    let mut hits = 0usize;
    for s in samples {
        if classify(net, s)? == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Mini-batch gradient descent with momentum on the mean loss.
///
/// Epoch order is a seeded shuffle; per-sample gradients within a batch may
/// be computed concurrently but reduce in fixed sample order, so training
/// is deterministic given the seed.
pub fn train(
    net: &LstmNetwork,
    samples: &[SequenceSample],
    opts: &TrainOptions,
) -> Result<(LstmNetwork, TrainReport)> {
    if samples.is_empty() {
        return Err(Error::invalid("training needs at least one sample"));
    }
    if opts.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    net.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut current = net.clone();
    let mut velocity = vec![0.0_f64; net.param_count()];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len(); // force a shuffle before the first batch
    let mut loss_trace = Vec::with_capacity(opts.max_iters);
    let mut iterations = 0;

    for iter in 0..opts.max_iters {
        let batch: Vec<usize> = (0..opts.batch_size.min(samples.len()))
            .map(|_| {
                if cursor >= order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let idx = order[cursor];
                cursor += 1;
                idx
            })
            .collect();

        let results: Vec<Result<(f64, LstmNetwork)>> =
            parallel::map_indexed(batch.len(), |b| loss_and_gradients(&current, &samples[batch[b]]));

        let scale = 1.0 / batch.len() as f64;
        let mut mean_loss = 0.0;
        let mut grad_flat = vec![0.0_f64; velocity.len()];
        for r in results {
            let (l, g) = r?;
            mean_loss += scale * l;
            for (acc, gv) in grad_flat.iter_mut().zip(g.flatten()) {
                *acc += scale * gv;
            }
        }
        if !mean_loss.is_finite() {
            return Err(Error::numerical(format!(
                "training diverged at iteration {iter}: loss is not finite"
            )));
        }
        loss_trace.push(mean_loss);

        let norm: f64 = grad_flat.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > opts.grad_clip {
            let factor = opts.grad_clip / norm;
            grad_flat.iter_mut().for_each(|g| *g *= factor);
        }

        let mut updated = current.flatten();
        for ((w, v), g) in updated.iter_mut().zip(velocity.iter_mut()).zip(&grad_flat) {
            *v = opts.momentum * *v - opts.learning_rate * g;
            *w += *v;
        }
        current.assign_from_flat(&updated)?;
        iterations = iter + 1;

        if let Some(target) = opts.stop_train_accuracy {
            if iterations % opts.eval_every == 0 && sequence_accuracy(&current, samples)? >= target {
                break;
            }
        }
    }

    let final_train_accuracy = sequence_accuracy(&current, samples)?;
    Ok((
        current,
        TrainReport {
            loss_trace,
            iterations,
            final_train_accuracy,
        },
    ))
}

/// Majority-symbol sequences: T one-hot symbols from C classes, labeled by
/// the strict majority symbol. Sequences with tied counts are redrawn so
/// every label is unambiguous.
pub fn majority_task(
    n_samples: usize,
    seq_len: usize,
    n_classes: usize,
    seed: u64,
) -> Vec<SequenceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples)
        .map(|_| loop {
            let symbols: Vec<usize> = (0..seq_len).map(|_| rng.gen_range(0..n_classes)).collect();
            let mut counts = vec![0usize; n_classes];
            for &s in &symbols {
                counts[s] += 1;
            }
            let max = *counts.iter().max().unwrap();
            if counts.iter().filter(|&&c| c == max).count() != 1 {
                continue;
            }
            let label = counts.iter().position(|&c| c == max).unwrap();
            let inputs = symbols
                .iter()
                .map(|&s| {
                    let mut x = Array1::<f64>::zeros(n_classes);
                    x[s] = 1.0;
                    x
                })
                .collect();
            break SequenceSample { inputs, label };
        })
        .collect()
}
