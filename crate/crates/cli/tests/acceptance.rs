//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test -p fusionforge-cli --test acceptance`
//! (add `-- --nocapture` to see the lines for passing criteria too).

use fusionforge_core::baselines::{average_fusion, plain_logistic_fusion_fit};
use fusionforge_core::class_prior::{estimate_prior, PriorDiagonal, PriorMatrix};
use fusionforge_core::fusion_solver::{
    cross_validate, fit, objective, predict, smooth_gradient, soft_threshold_scalar, InitMode,
    SolverOptions, DEFAULT_LAMBDA1_GRID, DEFAULT_LAMBDA2,
};
use fusionforge_core::metrics::{accuracy, average_precision, mean_ap};
use fusionforge_core::numeric::rel_err;
use fusionforge_core::score_data::{
    generate_synthetic, Dataset, LabelMatrix, LabelMode, ScoreMatrix, StackedScores, SynthConfig,
};
use fusionforge_core::temporal_lstm::{
    gradient_check, init_network, majority_task, sequence_accuracy, train as lstm_train,
    SequenceSample, TrainOptions,
};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pass(criterion: u32, detail: &str) {
    println!("[criterion {criterion:2}] PASS: {detail}");
}

/// Random stacked instance with probability-normalized rows.
fn random_instance(
    n: usize,
    c: usize,
    m: usize,
    seed: u64,
) -> (StackedScores, LabelMatrix, PriorMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let streams: Vec<ScoreMatrix> = (0..m)
        .map(|mi| {
            let mut scores = Array2::<f64>::zeros((n, c));
            for i in 0..n {
                let mut row: Vec<f64> = (0..c).map(|_| rng.gen::<f64>()).collect();
                let sum: f64 = row.iter().sum();
                for (j, v) in row.iter_mut().enumerate() {
                    scores[[i, j]] = *v / sum;
                }
            }
            ScoreMatrix::new(format!("m{mi}"), scores, ids.clone()).unwrap()
        })
        .collect();
    let classes: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let labels =
        LabelMatrix::from_classes(&classes, (0..c).map(|j| format!("c{j}")).collect()).unwrap();
    let ds = Dataset::new(streams, labels.clone(), LabelMode::Single).unwrap();
    let prior = estimate_prior(&ds, PriorDiagonal::Accuracy).unwrap();
    (ds.stacked(), labels, prior)
}

#[test]
fn criterion_01_fusion_gradient_oracle() {
    let mut dim_rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n = dim_rng.gen_range(5..=50);
        let c = dim_rng.gen_range(2..=6);
        let m = dim_rng.gen_range(1..=4);
        let lambda1 = [0.0, 1e-3, 1e-1][trial % 3];
        let (s, y, prior) = random_instance(n, c, m, 2000 + trial as u64);
        let mut w_rng = ChaCha8Rng::seed_from_u64(3000 + trial as u64);
        let w = Array2::from_shape_fn((c * m, c), |_| w_rng.gen_range(-1.5..1.5));
        let grad = smooth_gradient(&w, &s, &y, &prior.stacked, lambda1).unwrap();

        let h = 1e-6;
        for j in 0..c * m {
            for k in 0..c {
                let mut wp = w.clone();
                wp[[j, k]] += h;
                let mut wm = w.clone();
                wm[[j, k]] -= h;
                let fp = objective(&wp, &s, &y, &prior.stacked, lambda1, 0.0).unwrap();
                let fm = objective(&wm, &s, &y, &prior.stacked, lambda1, 0.0).unwrap();
                worst = worst.max(rel_err(grad[[j, k]], (fp - fm) / (2.0 * h)));
            }
        }
    }
    assert!(worst <= 1e-6, "max relative error {worst:.3e} exceeds 1e-6");
    pass(1, &format!("fusion gradient vs central differences, max rel err {worst:.3e} <= 1e-6"));
}

#[test]
fn criterion_02_prox_oracle() {
    let mut checked = 0usize;
    for &tau in &[0.0, 0.3, 1.0, 2.5] {
        // Symmetric grid plus the exact breakpoints x = +/- tau.
        let lo = -4.0 * tau - 1.0;
        let hi = 4.0 * tau + 1.0;
        let n = 100_000;
        for g in 0..=n {
            let x = lo + (hi - lo) * (g as f64) / (n as f64);
            let got = soft_threshold_scalar(x, tau);
            let sign = if x < 0.0 { -1.0 } else { 1.0 };
            let mut want = sign * (x.abs() - tau).max(0.0);
            if want == 0.0 {
                want = 0.0; // canonicalize IEEE -0.0 from the sign product
            }
            assert_eq!(got.to_bits(), want.to_bits(), "x={x}, tau={tau}");
            checked += 1;
        }
        for &x in &[tau, -tau] {
            let got = soft_threshold_scalar(x, tau);
            assert_eq!(got.to_bits(), 0.0_f64.to_bits(), "breakpoint x={x}, tau={tau}");
            checked += 1;
        }
    }
    pass(2, &format!("soft threshold bit-exact on {checked} grid points incl. breakpoints"));
}

#[test]
fn criterion_03_monotone_descent() {
    let lambda1s = [0.0, 1e-4, 1e-2];
    let lambda2s = [0.0, 1e-3, 1e-1];
    let mut fits = 0;
    for trial in 0..50u64 {
        let (s, y, prior) = random_instance(30, 3, 2, 4000 + trial);
        let lambda1 = lambda1s[(trial % 3) as usize];
        let lambda2 = lambda2s[((trial / 3) % 3) as usize];
        let model = fit(&s, &y, &prior, lambda1, lambda2, &SolverOptions::default()).unwrap();
        for w in model.fit_report.objective_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "objective rose {} -> {} (l1={lambda1}, l2={lambda2})",
                w[0],
                w[1]
            );
        }
        fits += 1;
    }
    pass(3, &format!("objective trace non-increasing over {fits} fits"));
}

#[test]
fn criterion_04_init_independence() {
    let opts_tight = SolverOptions {
        rel_tol: 1e-12,
        max_iters: 100_000,
        ..SolverOptions::default()
    };
    let mut worst: f64 = 0.0;
    for trial in 0..10u64 {
        let (s, y, prior) = random_instance(25, 3, 2, 5000 + trial);
        let lambda1 = [1e-3, 1e-2][(trial % 2) as usize];
        let from_prior = fit(&s, &y, &prior, lambda1, 1e-3, &opts_tight).unwrap();
        let from_zeros = fit(
            &s,
            &y,
            &prior,
            lambda1,
            1e-3,
            &SolverOptions {
                init: InitMode::Zeros,
                ..opts_tight.clone()
            },
        )
        .unwrap();
        let a = *from_prior.fit_report.objective_trace.last().unwrap();
        let b = *from_zeros.fit_report.objective_trace.last().unwrap();
        let rel = (a - b).abs() / a.abs().max(1e-12);
        worst = worst.max(rel);
        assert!(rel <= 1e-5, "trial {trial}: objectives {a} vs {b} differ by {rel:.3e}");
    }
    pass(4, &format!("zeros vs prior init agree on 10 instances, worst rel gap {worst:.3e} <= 1e-5"));
}

/// Independent oracle for criterion 5: plain gradient descent on the
/// unregularized logistic loss over flat vectors, backtracking line search,
/// run to relative tolerance 1e-10. Shares no code with the solver.
fn gd_logistic_reference(s: &StackedScores, y: &LabelMatrix) -> f64 {
    let n = s.n_samples();
    let d = s.matrix.ncols();
    let c = y.n_classes();
    let loss = |w: &[f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            for k in 0..c {
                let mut z = 0.0;
                for j in 0..d {
                    z += s.matrix[[i, j]] * w[j * c + k];
                }
                let sign = if y.labels[[i, k]] == 1 { -1.0 } else { 1.0 };
                total += (sign * z).max(0.0) + (-(sign * z).abs()).exp().ln_1p();
            }
        }
        total
    };
    let grad = |w: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; d * c];
        for i in 0..n {
            for k in 0..c {
                let mut z = 0.0;
                for j in 0..d {
                    z += s.matrix[[i, j]] * w[j * c + k];
                }
                let sign = if y.labels[[i, k]] == 1 { -1.0 } else { 1.0 };
                let sig = 1.0 / (1.0 + (-(sign * z)).exp());
                for j in 0..d {
                    g[j * c + k] += sign * sig * s.matrix[[i, j]];
                }
            }
        }
        g
    };

    let mut w = vec![0.0_f64; d * c];
    let mut f = loss(&w);
    let mut step = 1.0;
    for _ in 0..200_000 {
        let g = grad(&w);
        step *= 2.0;
        let (mut accepted_w, mut accepted_f) = (None, f);
        while step > 1e-20 {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(wv, gv)| wv - step * gv).collect();
            let fc = loss(&cand);
            if fc < f {
                accepted_w = Some(cand);
                accepted_f = fc;
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted_w else { break };
        let decrease = f - accepted_f;
        w = next;
        f = accepted_f;
        if decrease <= 1e-10 * f.abs().max(1.0) {
            break;
        }
    }
    f
}

#[test]
fn criterion_05_degenerate_case_oracle() {
    let mut worst: f64 = 0.0;
    for trial in 0..3u64 {
        let (s, y, _) = random_instance(30, 3, 2, 6000 + trial);
        let model = plain_logistic_fusion_fit(
            &s,
            &y,
            &SolverOptions {
                rel_tol: 1e-12,
                max_iters: 100_000,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        let ours = *model.fit_report.objective_trace.last().unwrap();
        let reference = gd_logistic_reference(&s, &y);
        let rel = (ours - reference).abs() / reference.abs().max(1e-12);
        worst = worst.max(rel);
        assert!(
            rel <= 1e-4,
            "trial {trial}: solver {ours} vs reference {reference} differ by {rel:.3e}"
        );
    }
    pass(5, &format!("lambda=0 fit matches independent GD logistic regression, worst rel gap {worst:.3e} <= 1e-4"));
}

#[test]
fn criterion_06_synthetic_table2_analogue() {
    let mut adaptive_sum = 0.0;
    let mut average_sum = 0.0;
    let mut logistic_sum = 0.0;
    for seed in 0..10u64 {
        let cfg = SynthConfig::staggered(600, 3000, 6, 3, 0.9, 0.55, seed);
        let (train, test) = generate_synthetic(&cfg).unwrap();
        let test_stacked = test.stacked();

        let outcome = cross_validate(
            &train,
            &DEFAULT_LAMBDA1_GRID,
            DEFAULT_LAMBDA2,
            3,
            seed,
            &SolverOptions::default(),
            PriorDiagonal::Accuracy,
        )
        .unwrap();
        adaptive_sum +=
            accuracy(&predict(&outcome.model, &test_stacked).unwrap(), &test.labels).unwrap();

        average_sum +=
            accuracy(&average_fusion(&test.streams).unwrap(), &test.labels).unwrap();

        let plain =
            plain_logistic_fusion_fit(&train.stacked(), &train.labels, &SolverOptions::default())
                .unwrap();
        logistic_sum +=
            accuracy(&predict(&plain, &test_stacked).unwrap(), &test.labels).unwrap();
    }
    let adaptive = adaptive_sum / 10.0;
    let average = average_sum / 10.0;
    let logistic = logistic_sum / 10.0;
    assert!(
        adaptive - average >= 0.03,
        "adaptive {adaptive:.4} does not beat average {average:.4} by 0.03"
    );
    assert!(
        adaptive >= logistic,
        "adaptive {adaptive:.4} below plain logistic {logistic:.4}"
    );
    pass(6, &format!(
        "10-seed means: adaptive {adaptive:.4} > average {average:.4} by {:.4} (>= 0.03), adaptive >= logistic {logistic:.4}",
        adaptive - average
    ));
}

#[test]
fn criterion_07_prior_regularizer_value() {
    let mut wins = 0;
    for seed in 0..10u64 {
        let cfg = SynthConfig::staggered(60, 3000, 6, 3, 0.9, 0.55, seed);
        let (train, test) = generate_synthetic(&cfg).unwrap();
        let test_stacked = test.stacked();

        let outcome = cross_validate(
            &train,
            &DEFAULT_LAMBDA1_GRID,
            DEFAULT_LAMBDA2,
            3,
            seed,
            &SolverOptions::default(),
            PriorDiagonal::Accuracy,
        )
        .unwrap();
        let with_prior =
            accuracy(&predict(&outcome.model, &test_stacked).unwrap(), &test.labels).unwrap();

        let prior = estimate_prior(&train, PriorDiagonal::Accuracy).unwrap();
        let no_pull = fit(
            &train.stacked(),
            &train.labels,
            &prior,
            0.0,
            DEFAULT_LAMBDA2,
            &SolverOptions::default(),
        )
        .unwrap();
        let without =
            accuracy(&predict(&no_pull, &test_stacked).unwrap(), &test.labels).unwrap();
        if with_prior > without {
            wins += 1;
        }
    }
    assert!(wins >= 8, "CV-selected lambda1 beat lambda1=0 on only {wins}/10 seeds");
    pass(7, &format!("CV-selected lambda1 > 0 beats lambda1 = 0 on {wins}/10 seeds (>= 8)"));
}

#[test]
fn criterion_08_sparsity_monotonicity() {
    let (s, y, prior) = random_instance(50, 4, 2, 8000);
    let lambda2s = [0.0, 1e-3, 1e-1, 10.0];
    let mut fractions = Vec::new();
    for &lambda2 in &lambda2s {
        let model = fit(&s, &y, &prior, 0.0, lambda2, &SolverOptions::default()).unwrap();
        fractions.push(model.fit_report.sparsity);
    }
    for pair in fractions.windows(2) {
        assert!(
            pair[1] >= pair[0],
            "sparsity decreased along the lambda2 ladder: {fractions:?}"
        );
    }
    assert!(
        fractions[3] >= 0.99,
        "lambda2 = 10 keeps only {:.3} of weights at zero",
        fractions[3]
    );
    pass(8, &format!("zero fractions {fractions:?} non-decreasing, lambda2=10 gives >= 99% zeros"));
}

#[test]
fn criterion_09_lstm_gradient_oracle() {
    let mut worst: f64 = 0.0;
    for (trial, (hidden, t_len)) in [
        (vec![8], 1),
        (vec![8], 7),
        (vec![8, 6], 1),
        (vec![8, 6], 7),
    ]
    .into_iter()
    .enumerate()
    {
        let net = init_network(5, &hidden, 3, 9000 + trial as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(9100 + trial as u64);
        let seq = SequenceSample {
            inputs: (0..t_len)
                .map(|_| Array1::from_shape_fn(5, |_| rng.gen_range(-1.0..1.0)))
                .collect(),
            label: rng.gen_range(0..3),
        };
        let err = gradient_check(&net, &seq, 1e-5).unwrap();
        assert!(
            err <= 1e-4,
            "layers {hidden:?}, T={t_len}: max rel err {err:.3e} exceeds 1e-4"
        );
        worst = worst.max(err);
    }
    pass(9, &format!("BPTT vs finite differences on 1/2-layer nets, T in {{1,7}}, worst rel err {worst:.3e} <= 1e-4"));
}

#[test]
fn criterion_10_lstm_toy_learning() {
    let mut train_sum = 0.0;
    let mut test_sum = 0.0;
    let mut max_iters_used = 0;
    for seed in 1..=5u64 {
        let train_set = majority_task(256, 20, 4, seed);
        let held_out = majority_task(128, 20, 4, seed.wrapping_add(1000));
        let net = init_network(4, &[16, 12], 4, seed.wrapping_add(2000));
        let opts = TrainOptions {
            max_iters: 5000,
            stop_train_accuracy: Some(0.99),
            seed,
            ..TrainOptions::default()
        };
        let (trained, report) = lstm_train(&net, &train_set, &opts).unwrap();
        assert!(report.iterations <= 5000);
        max_iters_used = max_iters_used.max(report.iterations);
        train_sum += report.final_train_accuracy;
        test_sum += sequence_accuracy(&trained, &held_out).unwrap();
    }
    let train_mean = train_sum / 5.0;
    let test_mean = test_sum / 5.0;
    assert!(train_mean >= 0.95, "seed-averaged train accuracy {train_mean:.4} below 0.95");
    assert!(test_mean >= 0.90, "seed-averaged held-out accuracy {test_mean:.4} below 0.90");
    pass(10, &format!(
        "majority task: train {train_mean:.4} >= 0.95, held-out {test_mean:.4} >= 0.90, <= {max_iters_used} iterations"
    ));
}

/// Independent AP oracle: O(N^2) rank counting without a sort, terms summed
/// in rank order.
fn ap_brute_force(scores: &[f64], positives: &[bool]) -> f64 {
    let n = scores.len();
    let mut terms: Vec<(usize, f64)> = Vec::new();
    for p in 0..n {
        if !positives[p] {
            continue;
        }
        let above = |q: usize| scores[q] > scores[p] || (scores[q] == scores[p] && q < p);
        let rank = 1 + (0..n).filter(|&q| above(q)).count();
        let hits = (0..n)
            .filter(|&q| positives[q] && (above(q) || q == p))
            .count();
        terms.push((rank, hits as f64 / rank as f64));
    }
    terms.sort_by_key(|&(rank, _)| rank);
    let total = terms.len() as f64;
    terms.iter().map(|&(_, v)| v).sum::<f64>() / total
}

#[test]
fn criterion_11_metrics_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11_000);
    for _ in 0..100 {
        let n = 12;
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..7) as f64) / 6.0).collect();
        let mut positives: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.35)).collect();
        if !positives.iter().any(|&p| p) {
            positives[rng.gen_range(0..n)] = true;
        }
        let got = average_precision(&scores, &positives).unwrap();
        let want = ap_brute_force(&scores, &positives);
        assert_eq!(got, want, "AP mismatch on scores {scores:?}");
    }

    // mAP equals the mean of per-class APs to 1e-12.
    for trial in 0..5u64 {
        let (s, y, _) = random_instance(24, 4, 1, 11_100 + trial);
        let pred = ScoreMatrix::new("p", s.stream_block(0).to_owned(), s.sample_ids.clone()).unwrap();
        let report = mean_ap(&pred, &y).unwrap();
        let included: Vec<f64> = report
            .per_class_ap
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .collect();
        let mean = included.iter().sum::<f64>() / included.len() as f64;
        assert!((report.map - mean).abs() <= 1e-12);
    }
    pass(11, "AP matches brute-force precision@k on 100 instances exactly; mAP = mean per-class AP");
}

fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_fusionforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn dir_snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn criterion_12_cli_determinism() {
    let base = tempfile::tempdir().unwrap();
    let base = base.path();

    // gen twice into separate directories.
    for round in ["a", "b"] {
        let out = base.join(format!("gen_{round}"));
        let status = run_cli(&[
            "gen",
            "--out",
            out.to_str().unwrap(),
            "--classes",
            "4",
            "--streams",
            "2",
            "--train",
            "60",
            "--test",
            "80",
            "--seed",
            "5",
        ]);
        assert!(status.status.success(), "gen failed: {status:?}");
    }
    assert_eq!(
        dir_snapshot(&base.join("gen_a")),
        dir_snapshot(&base.join("gen_b")),
        "gen outputs differ between identical runs"
    );

    // fit twice from the generated data.
    let manifest = base.join("gen_a/train_manifest.json");
    for round in ["a", "b"] {
        let out = base.join(format!("fit_{round}"));
        std::fs::create_dir_all(&out).unwrap();
        let status = run_cli(&[
            "fit",
            "--manifest",
            manifest.to_str().unwrap(),
            "--lambda1",
            "1e-3",
            "--lambda2",
            "1e-3",
            "--out-model",
            out.join("model.json").to_str().unwrap(),
            "--out-report",
            out.join("report.json").to_str().unwrap(),
        ]);
        assert!(status.status.success(), "fit failed: {status:?}");
    }
    assert_eq!(
        dir_snapshot(&base.join("fit_a")),
        dir_snapshot(&base.join("fit_b")),
        "fit outputs differ between identical runs"
    );

    // lstm train twice at toy scale.
    for round in ["a", "b"] {
        let out = base.join(format!("lstm_{round}"));
        std::fs::create_dir_all(&out).unwrap();
        let status = run_cli(&[
            "lstm",
            "train",
            "--hidden",
            "6,5",
            "--seq-len",
            "8",
            "--classes",
            "3",
            "--train-samples",
            "32",
            "--test-samples",
            "16",
            "--iters",
            "60",
            "--batch",
            "8",
            "--seed",
            "3",
            "--out-model",
            out.join("net.json").to_str().unwrap(),
            "--out-report",
            out.join("report.json").to_str().unwrap(),
        ]);
        assert!(status.status.success(), "lstm train failed: {status:?}");
    }
    assert_eq!(
        dir_snapshot(&base.join("lstm_a")),
        dir_snapshot(&base.join("lstm_b")),
        "lstm train outputs differ between identical runs"
    );

    pass(12, "gen, fit, and lstm train rerun byte-identically");
}
