//! Exact BPTT gradients, plus the finite-difference check used by the CLI.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::numeric::rel_err;

use super::{forward_cached, mat_t_vec, mat_vec, softmax, LstmNetwork, SequenceSample};

/// Gradients share the network's structure; every field holds d(loss)/d(param).
pub type LstmGradients = LstmNetwork;

fn outer_add(target: &mut Array2<f64>, rows: &Array1<f64>, cols: &Array1<f64>) {
    for (r, &rv) in rows.iter().enumerate() {
        if rv == 0.0 {
            continue;
        }
        for (c, &cv) in cols.iter().enumerate() {
            target[[r, c]] += rv * cv;
        }
    }
}

/// Final-step cross-entropy loss and its exact gradients, obtained by
/// unrolling the network over the sequence and walking the tape backwards
/// (layers top to bottom, time last to first).
pub fn loss_and_gradients(
    net: &LstmNetwork,
    seq: &SequenceSample,
) -> Result<(f64, LstmGradients)> {
    if seq.label >= net.n_classes() {
        return Err(Error::invalid(format!(
            "label {} out of range for {} classes",
            seq.label,
            net.n_classes()
        )));
    }
    let caches = forward_cached(net, seq)?;
    let t_len = caches.len();
    let n_layers = net.layers.len();

    let last_h = &caches[t_len - 1][n_layers - 1].h;
    let mut logits = mat_vec(&net.head_u, &last_h.view());
    logits += &net.head_b;
    let probs = softmax(&logits.view());
    let loss = -probs[seq.label].ln();
    if !loss.is_finite() {
        return Err(Error::numerical("non-finite loss in backward pass"));
    }

    let mut grads = net.zeros_like();

    // Softmax + cross-entropy head: dlogits = p - onehot(label).
    let mut dlogits = probs;
    dlogits[seq.label] -= 1.0;
    outer_add(&mut grads.head_u, &dlogits, last_h);
    grads.head_b += &dlogits;

    // dh_above[t]: gradient flowing into h_t of the current layer from
    // everything above it. For the top layer that is just the head at t = T.
    let mut dh_above: Vec<Array1<f64>> = (0..t_len)
        .map(|t| {
            if t == t_len - 1 {
                mat_t_vec(&net.head_u, &dlogits.view())
            } else {
                Array1::zeros(net.layers[n_layers - 1].hidden_dim)
            }
        })
        .collect();

    for l in (0..n_layers).rev() {
        let params = &net.layers[l];
        let hd = params.hidden_dim;
        let g = &mut grads.layers[l];
        let mut dh_rec = Array1::<f64>::zeros(hd);
        let mut dc_rec = Array1::<f64>::zeros(hd);
        let mut dx_below: Vec<Array1<f64>> = if l > 0 {
            (0..t_len)
                .map(|_| Array1::zeros(params.input_dim))
                .collect()
        } else {
            Vec::new()
        };

        for t in (0..t_len).rev() {
            let cache = &caches[t][l];
            let zero_state = Array1::<f64>::zeros(hd);
            let (h_prev, c_prev) = if t == 0 {
                (&zero_state, &zero_state)
            } else {
                (&caches[t - 1][l].h, &caches[t - 1][l].c)
            };
            let x_owned;
            let x_t: &Array1<f64> = if l == 0 {
                &seq.inputs[t]
            } else {
                x_owned = caches[t][l - 1].h.clone();
                &x_owned
            };

            let dh = &dh_above[t] + &dh_rec;

            // Output gate first: its peephole feeds the current cell, so
            // da_o must exist before the total cell gradient.
            let mut da_o = Array1::<f64>::zeros(hd);
            for k in 0..hd {
                let do_k = dh[k] * cache.tanh_c[k];
                da_o[k] = do_k * cache.o[k] * (1.0 - cache.o[k]);
            }

            let mut dc = Array1::<f64>::zeros(hd);
            for k in 0..hd {
                dc[k] = dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k])
                    + dc_rec[k]
                    + params.w_co[k] * da_o[k];
            }

            let mut da_i = Array1::<f64>::zeros(hd);
            let mut da_f = Array1::<f64>::zeros(hd);
            let mut da_g = Array1::<f64>::zeros(hd);
            for k in 0..hd {
                da_i[k] = dc[k] * cache.g[k] * cache.i[k] * (1.0 - cache.i[k]);
                da_f[k] = dc[k] * c_prev[k] * cache.f[k] * (1.0 - cache.f[k]);
                da_g[k] = dc[k] * cache.i[k] * (1.0 - cache.g[k] * cache.g[k]);
            }

            outer_add(&mut g.w_xi, &da_i, x_t);
            outer_add(&mut g.w_xf, &da_f, x_t);
            outer_add(&mut g.w_xc, &da_g, x_t);
            outer_add(&mut g.w_xo, &da_o, x_t);
            outer_add(&mut g.w_hi, &da_i, h_prev);
            outer_add(&mut g.w_hf, &da_f, h_prev);
            outer_add(&mut g.w_hc, &da_g, h_prev);
            outer_add(&mut g.w_ho, &da_o, h_prev);
            for k in 0..hd {
                g.w_ci[k] += da_i[k] * c_prev[k];
                g.w_cf[k] += da_f[k] * c_prev[k];
                g.w_co[k] += da_o[k] * cache.c[k];
                g.b_i[k] += da_i[k];
                g.b_f[k] += da_f[k];
                g.b_c[k] += da_g[k];
                g.b_o[k] += da_o[k];
            }

            dh_rec = mat_t_vec(&params.w_hi, &da_i.view());
            dh_rec += &mat_t_vec(&params.w_hf, &da_f.view());
            dh_rec += &mat_t_vec(&params.w_hc, &da_g.view());
            dh_rec += &mat_t_vec(&params.w_ho, &da_o.view());

            for k in 0..hd {
                dc_rec[k] = dc[k] * cache.f[k]
                    + params.w_ci[k] * da_i[k]
                    + params.w_cf[k] * da_f[k];
            }

            if l > 0 {
                let mut dx = mat_t_vec(&params.w_xi, &da_i.view());
                dx += &mat_t_vec(&params.w_xf, &da_f.view());
                dx += &mat_t_vec(&params.w_xc, &da_g.view());
                dx += &mat_t_vec(&params.w_xo, &da_o.view());
                dx_below[t] = dx;
            }
        }

        if l > 0 {
            dh_above = dx_below;
        }
    }

    if grads.flatten().iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite gradient (exploding backward pass)"));
    }
    Ok((loss, grads))
}

/// Exact gradients of the final-step loss with respect to every parameter.
pub fn bptt_gradients(net: &LstmNetwork, seq: &SequenceSample) -> Result<LstmGradients> {
    Ok(loss_and_gradients(net, seq)?.1)
}

/// Central finite-difference check over every parameter.
///
/// Returns the maximum relative error (denominator `max(1, |a|, |b|)`)
/// between the analytic gradients and `(L(p+h) - L(p-h)) / 2h`.
pub fn gradient_check(net: &LstmNetwork, seq: &SequenceSample, step: f64) -> Result<f64> {
    let grads = bptt_gradients(net, seq)?.flatten();
    let base = net.flatten();
    let mut probe = net.clone();
    let mut max_err: f64 = 0.0;
    for idx in 0..base.len() {
        let mut plus = base.clone();
        plus[idx] += step;
        probe.assign_from_flat(&plus)?;
        let loss_plus = super::loss(&probe, seq)?;

        let mut minus = base.clone();
        minus[idx] -= step;
        probe.assign_from_flat(&minus)?;
        let loss_minus = super::loss(&probe, seq)?;

        let fd = (loss_plus - loss_minus) / (2.0 * step);
        max_err = max_err.max(rel_err(grads[idx], fd));
    }
    Ok(max_err)
}
