//! Toy-scale stacked LSTM with peephole gates, softmax head, and exact BPTT.
//!
//! Gate recurrences, with `.` matrix-vector products and `*` elementwise:
//!
//! ```text
//! i_t = sigma(W_xi . x_t + W_hi . h_{t-1} + w_ci * c_{t-1} + b_i)
//! f_t = sigma(W_xf . x_t + W_hf . h_{t-1} + w_cf * c_{t-1} + b_f)
//! c_t = f_t * c_{t-1} + i_t * tanh(W_xc . x_t + W_hc . h_{t-1} + b_c)
//! o_t = sigma(W_xo . x_t + W_ho . h_{t-1} + w_co * c_t + b_o)
//! h_t = o_t * tanh(c_t)
//! ```
//!
//! Cell-to-gate connections are diagonal (elementwise weight vectors).
//! Layer l consumes layer l-1's hidden states; the class posterior is a
//! softmax over an affine head on the last layer's final hidden state.

mod backprop;
mod train;

pub use backprop::{bptt_gradients, gradient_check, loss_and_gradients, LstmGradients};
pub use train::{
    init_network, majority_task, sequence_accuracy, train, TrainOptions, TrainReport,
};

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{argmax_tie_lowest, sigmoid};

/// One LSTM layer: input/hidden weight matrices per gate, diagonal peephole
/// vectors, and biases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_xi: Array2<f64>,
    pub w_hi: Array2<f64>,
    pub w_xf: Array2<f64>,
    pub w_hf: Array2<f64>,
    pub w_xc: Array2<f64>,
    pub w_hc: Array2<f64>,
    pub w_xo: Array2<f64>,
    pub w_ho: Array2<f64>,
    pub w_ci: Array1<f64>,
    pub w_cf: Array1<f64>,
    pub w_co: Array1<f64>,
    pub b_i: Array1<f64>,
    pub b_f: Array1<f64>,
    pub b_c: Array1<f64>,
    pub b_o: Array1<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmLayerParams {
            input_dim,
            hidden_dim,
            w_xi: Array2::zeros((hidden_dim, input_dim)),
            w_hi: Array2::zeros((hidden_dim, hidden_dim)),
            w_xf: Array2::zeros((hidden_dim, input_dim)),
            w_hf: Array2::zeros((hidden_dim, hidden_dim)),
            w_xc: Array2::zeros((hidden_dim, input_dim)),
            w_hc: Array2::zeros((hidden_dim, hidden_dim)),
            w_xo: Array2::zeros((hidden_dim, input_dim)),
            w_ho: Array2::zeros((hidden_dim, hidden_dim)),
            w_ci: Array1::zeros(hidden_dim),
            w_cf: Array1::zeros(hidden_dim),
            w_co: Array1::zeros(hidden_dim),
            b_i: Array1::zeros(hidden_dim),
            b_f: Array1::zeros(hidden_dim),
            b_c: Array1::zeros(hidden_dim),
            b_o: Array1::zeros(hidden_dim),
        }
    }
}

/// Hidden and cell state of one layer at one time step.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: Array1::zeros(hidden_dim),
            c: Array1::zeros(hidden_dim),
        }
    }
}

/// Stacked LSTM with a C-way softmax head on the last layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmNetwork {
    pub layers: Vec<LstmLayerParams>,
    /// C x hidden_dim of the last layer.
    pub head_u: Array2<f64>,
    pub head_b: Array1<f64>,
}

/// One training sequence: T input vectors and a class label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceSample {
    pub inputs: Vec<Array1<f64>>,
    pub label: usize,
}

impl LstmNetwork {
    pub fn n_classes(&self) -> usize {
        self.head_b.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.input_dim).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        let mut prev = self.layers[0].input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.input_dim != prev {
                return Err(Error::shape(format!(
                    "layer {i} expects input dim {} but gets {prev}",
                    layer.input_dim
                )));
            }
            let (h, x) = (layer.hidden_dim, layer.input_dim);
            let gates_ok = layer.w_xi.dim() == (h, x)
                && layer.w_hi.dim() == (h, h)
                && layer.w_xf.dim() == (h, x)
                && layer.w_hf.dim() == (h, h)
                && layer.w_xc.dim() == (h, x)
                && layer.w_hc.dim() == (h, h)
                && layer.w_xo.dim() == (h, x)
                && layer.w_ho.dim() == (h, h)
                && [&layer.w_ci, &layer.w_cf, &layer.w_co].iter().all(|v| v.len() == h)
                && [&layer.b_i, &layer.b_f, &layer.b_c, &layer.b_o].iter().all(|v| v.len() == h);
            if !gates_ok {
                return Err(Error::shape(format!("layer {i} parameter shapes are inconsistent")));
            }
            prev = h;
        }
        if self.head_u.dim() != (self.head_b.len(), prev) {
            return Err(Error::shape(format!(
                "head is {:?} with {} biases; expected (C, {prev})",
                self.head_u.dim(),
                self.head_b.len()
            )));
        }
        Ok(())
    }

    /// A same-shape network with every parameter zeroed (gradient container).
    pub fn zeros_like(&self) -> LstmNetwork {
        let layers = self
            .layers
            .iter()
            .map(|l| LstmLayerParams::zeros(l.input_dim, l.hidden_dim))
            .collect();
        LstmNetwork {
            layers,
            head_u: Array2::zeros(self.head_u.dim()),
            head_b: Array1::zeros(self.head_b.len()),
        }
    }

    /// Visits every parameter in a fixed order (layers in order; per layer
    /// the gate matrices, peepholes, biases; then the head).
    fn for_each_param(&self, mut f: impl FnMut(f64)) {
        for l in &self.layers {
            for m in [&l.w_xi, &l.w_hi, &l.w_xf, &l.w_hf, &l.w_xc, &l.w_hc, &l.w_xo, &l.w_ho] {
                m.iter().for_each(|&v| f(v));
            }
            for v in [&l.w_ci, &l.w_cf, &l.w_co, &l.b_i, &l.b_f, &l.b_c, &l.b_o] {
                v.iter().for_each(|&x| f(x));
            }
        }
        self.head_u.iter().for_each(|&v| f(v));
        self.head_b.iter().for_each(|&v| f(v));
    }

    fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            for m in [
                &mut l.w_xi, &mut l.w_hi, &mut l.w_xf, &mut l.w_hf, &mut l.w_xc, &mut l.w_hc,
                &mut l.w_xo, &mut l.w_ho,
            ] {
                m.iter_mut().for_each(&mut f);
            }
            for v in [
                &mut l.w_ci, &mut l.w_cf, &mut l.w_co, &mut l.b_i, &mut l.b_f, &mut l.b_c,
                &mut l.b_o,
            ] {
                v.iter_mut().for_each(&mut f);
            }
        }
        self.head_u.iter_mut().for_each(&mut f);
        self.head_b.iter_mut().for_each(&mut f);
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(|_| n += 1);
        n
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_param(|v| out.push(v));
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut it = flat.iter();
        self.for_each_param_mut(|v| *v = *it.next().expect("length checked"));
        Ok(())
    }

    /// self += factor * other, matching structures assumed.
    pub fn add_scaled(&mut self, other: &LstmNetwork, factor: f64) {
        let flat = other.flatten();
        let mut it = flat.iter();
        self.for_each_param_mut(|v| *v += factor * *it.next().expect("same shape"));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<LstmNetwork> {
        let net: LstmNetwork =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("network JSON: {e}")))?;
        net.validate()?;
        Ok(net)
    }
}

pub(crate) fn mat_vec(w: &Array2<f64>, x: &ArrayView1<f64>) -> Array1<f64> {
    let (rows, cols) = w.dim();
    let mut out = Array1::<f64>::zeros(rows);
    for r in 0..rows {
        let mut acc = 0.0;
        for c in 0..cols {
            acc += w[[r, c]] * x[c];
        }
        out[r] = acc;
    }
    out
}

pub(crate) fn mat_t_vec(w: &Array2<f64>, d: &ArrayView1<f64>) -> Array1<f64> {
    let (rows, cols) = w.dim();
    let mut out = Array1::<f64>::zeros(cols);
    for r in 0..rows {
        let dv = d[r];
        for c in 0..cols {
            out[c] += w[[r, c]] * dv;
        }
    }
    out
}

/// Everything the backward pass needs from one step of one layer.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    /// Candidate cell input tanh(W_xc x + W_hc h_prev + b_c).
    pub g: Array1<f64>,
    pub o: Array1<f64>,
    pub c: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
}

pub(crate) fn step_cached(
    params: &LstmLayerParams,
    x: &ArrayView1<f64>,
    prev: &LstmState,
) -> StepCache {
    let mut a_i = mat_vec(&params.w_xi, x);
    let mut a_f = mat_vec(&params.w_xf, x);
    let mut a_g = mat_vec(&params.w_xc, x);
    let mut a_o = mat_vec(&params.w_xo, x);
    let h_prev = prev.h.view();
    a_i += &mat_vec(&params.w_hi, &h_prev);
    a_f += &mat_vec(&params.w_hf, &h_prev);
    a_g += &mat_vec(&params.w_hc, &h_prev);
    a_o += &mat_vec(&params.w_ho, &h_prev);

    let hd = params.hidden_dim;
    let mut i = Array1::<f64>::zeros(hd);
    let mut f = Array1::<f64>::zeros(hd);
    let mut g = Array1::<f64>::zeros(hd);
    let mut c = Array1::<f64>::zeros(hd);
    for k in 0..hd {
        i[k] = sigmoid(a_i[k] + params.w_ci[k] * prev.c[k] + params.b_i[k]);
        f[k] = sigmoid(a_f[k] + params.w_cf[k] * prev.c[k] + params.b_f[k]);
        g[k] = (a_g[k] + params.b_c[k]).tanh();
        c[k] = f[k] * prev.c[k] + i[k] * g[k];
    }
    let mut o = Array1::<f64>::zeros(hd);
    let mut tanh_c = Array1::<f64>::zeros(hd);
    let mut h = Array1::<f64>::zeros(hd);
    for k in 0..hd {
        o[k] = sigmoid(a_o[k] + params.w_co[k] * c[k] + params.b_o[k]);
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }
    StepCache {
        i,
        f,
        g,
        o,
        c,
        tanh_c,
        h,
    }
}

/// One forward step of one layer.
pub fn lstm_step(
    params: &LstmLayerParams,
    x: &ArrayView1<f64>,
    prev: &LstmState,
) -> Result<LstmState> {
    if x.len() != params.input_dim {
        return Err(Error::shape(format!(
            "input has {} entries, layer expects {}",
            x.len(),
            params.input_dim
        )));
    }
    if prev.h.len() != params.hidden_dim || prev.c.len() != params.hidden_dim {
        return Err(Error::shape("previous state does not match hidden dim"));
    }
    if x.iter().chain(prev.h.iter()).chain(prev.c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite activation entering lstm_step"));
    }
    let cache = step_cached(params, x, prev);
    if cache.h.iter().any(|v| !v.is_finite()) || cache.c.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite activation leaving lstm_step"));
    }
    Ok(LstmState {
        h: cache.h,
        c: cache.c,
    })
}

/// Shift-invariant softmax.
pub fn softmax(logits: &ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|z| (z - max).exp());
    let sum: f64 = out.iter().sum();
    out.mapv_inplace(|v| v / sum);
    out
}

/// Full forward trace: caches[t][l].
pub(crate) fn forward_cached(net: &LstmNetwork, seq: &SequenceSample) -> Result<Vec<Vec<StepCache>>> {
    net.validate()?;
    if seq.inputs.is_empty() {
        return Err(Error::invalid("sequence must have at least one step"));
    }
    if seq.inputs.iter().any(|x| x.len() != net.input_dim()) {
        return Err(Error::shape(format!(
            "sequence inputs must have dim {}",
            net.input_dim()
        )));
    }
    let mut states: Vec<LstmState> = net
        .layers
        .iter()
        .map(|l| LstmState::zeros(l.hidden_dim))
        .collect();
    let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(seq.inputs.len());
    for x in &seq.inputs {
        let mut layer_caches = Vec::with_capacity(net.layers.len());
        let mut input = x.clone();
        for (l, params) in net.layers.iter().enumerate() {
            let cache = step_cached(params, &input.view(), &states[l]);
            if cache.c.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical("non-finite activation during forward pass"));
            }
            states[l] = LstmState {
                h: cache.h.clone(),
                c: cache.c.clone(),
            };
            input = cache.h.clone();
            layer_caches.push(cache);
        }
        caches.push(layer_caches);
    }
    Ok(caches)
}

/// Runs the network over a sequence.
///
/// Returns the per-step per-layer states and the class posterior computed
/// from the last layer's final hidden state.
pub fn forward(
    net: &LstmNetwork,
    seq: &SequenceSample,
) -> Result<(Vec<Vec<LstmState>>, Array1<f64>)> {
    let caches = forward_cached(net, seq)?;
    let states: Vec<Vec<LstmState>> = caches
        .iter()
        .map(|step| {
            step.iter()
                .map(|c| LstmState {
                    h: c.h.clone(),
                    c: c.c.clone(),
                })
                .collect()
        })
        .collect();
    let last_h = &caches.last().expect("non-empty").last().expect("layers").h;
    let mut logits = mat_vec(&net.head_u, &last_h.view());
    logits += &net.head_b;
    Ok((states, softmax(&logits.view())))
}

/// Cross-entropy at the final step: -ln p_label.
pub fn loss(net: &LstmNetwork, seq: &SequenceSample) -> Result<f64> {
    if seq.label >= net.n_classes() {
        return Err(Error::invalid(format!(
            "label {} out of range for {} classes",
            seq.label,
            net.n_classes()
        )));
    }
    let (_, probs) = forward(net, seq)?;
    Ok(-probs[seq.label].ln())
}

/// Predicted class: argmax of the final posterior, ties to the lowest index.
pub fn classify(net: &LstmNetwork, seq: &SequenceSample) -> Result<usize> {
    let (_, probs) = forward(net, seq)?;
    Ok(argmax_tie_lowest(probs.iter()))
}
