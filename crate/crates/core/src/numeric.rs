//! Small numeric helpers shared across modules.

/// Logistic function, stable for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(z))` computed as `max(z, 0) + ln(1 + exp(-|z|))`.
pub fn log1p_exp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Index of the largest value; ties resolve to the lowest index.
///
/// Callers guarantee a non-empty, finite input.
pub fn argmax_tie_lowest<'a, I>(values: I) -> usize
where
    I: IntoIterator<Item = &'a f64>,
{
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in values.into_iter().enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// Relative error with denominator `max(1, |a|, |b|)`, the convention used
/// by every gradient check in this workspace.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_tails() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(40.0) > 1.0 - 1e-15);
        assert!(sigmoid(-40.0) < 1e-15);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log1p_exp_matches_naive_in_safe_range() {
        for &z in &[-30.0, -2.5, 0.0, 1e-9, 4.2, 25.0] {
            let naive = (1.0 + f64::exp(z)).ln();
            assert!((log1p_exp(z) - naive).abs() <= 1e-12 * naive.max(1.0));
        }
        // No overflow where the naive form would blow up.
        assert!((log1p_exp(800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        assert_eq!(argmax_tie_lowest([0.2, 0.5, 0.5, 0.1].iter()), 1);
        assert_eq!(argmax_tie_lowest([0.7].iter()), 0);
        assert_eq!(argmax_tie_lowest([0.3, 0.3, 0.3].iter()), 0);
    }
}
