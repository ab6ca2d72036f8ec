// Scratch calibration: margins for criteria 6 and 7 across sharpness values.
use fusionforge_core::baselines::*;
use fusionforge_core::class_prior::*;
use fusionforge_core::fusion_solver::*;
use fusionforge_core::metrics::accuracy;
use fusionforge_core::score_data::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let sharpness: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let seeds: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(6);
    let full_cv: bool = args.get(3).map(|s| s == "cv").unwrap_or(false);

    // criterion 6 shape (n_train 600)
    let (mut ad6, mut av6, mut lo6) = (0.0, 0.0, 0.0);
    for seed in 0..seeds {
        let mut cfg = SynthConfig::staggered(600, 3000, 6, 3, 0.9, 0.55, seed);
        cfg.confusion_sharpness = sharpness;
        let (train, test) = generate_synthetic(&cfg).unwrap();
        let test_stacked = test.stacked();
        let model = if full_cv {
            cross_validate(&train, &DEFAULT_LAMBDA1_GRID, DEFAULT_LAMBDA2, 3, seed,
                &SolverOptions::default(), PriorDiagonal::Accuracy).unwrap().model
        } else {
            let prior = estimate_prior(&train, PriorDiagonal::Accuracy).unwrap();
            fit(&train.stacked(), &train.labels, &prior, 1e-2, DEFAULT_LAMBDA2,
                &SolverOptions::default()).unwrap()
        };
        ad6 += accuracy(&predict(&model, &test_stacked).unwrap(), &test.labels).unwrap();
        av6 += accuracy(&average_fusion(&test.streams).unwrap(), &test.labels).unwrap();
        let plain = plain_logistic_fusion_fit(&train.stacked(), &train.labels, &SolverOptions::default()).unwrap();
        lo6 += accuracy(&predict(&plain, &test_stacked).unwrap(), &test.labels).unwrap();
    }

    // criterion 7 shape (n_train 60): CV-selected positive lambda1 vs 0
    let mut wins = 0;
    let (mut with_sum, mut without_sum) = (0.0, 0.0);
    for seed in 0..seeds {
        let mut cfg = SynthConfig::staggered(60, 3000, 6, 3, 0.9, 0.55, seed);
        cfg.confusion_sharpness = sharpness;
        let (train, test) = generate_synthetic(&cfg).unwrap();
        let test_stacked = test.stacked();
        let outcome = cross_validate(&train, &DEFAULT_LAMBDA1_GRID, DEFAULT_LAMBDA2, 3, seed,
            &SolverOptions::default(), PriorDiagonal::Accuracy).unwrap();
        let with_prior = accuracy(&predict(&outcome.model, &test_stacked).unwrap(), &test.labels).unwrap();
        let prior = estimate_prior(&train, PriorDiagonal::Accuracy).unwrap();
        let no_pull = fit(&train.stacked(), &train.labels, &prior, 0.0, DEFAULT_LAMBDA2,
            &SolverOptions::default()).unwrap();
        let without = accuracy(&predict(&no_pull, &test_stacked).unwrap(), &test.labels).unwrap();
        if with_prior > without { wins += 1; }
        with_sum += with_prior; without_sum += without;
    }

    let n = seeds as f64;
    println!("s={sharpness}: C6 adaptive {:.4} avg {:.4} logi {:.4} margin {:+.4} | C7 wins {wins}/{seeds} (cv {:.4} vs l1=0 {:.4})",
             ad6/n, av6/n, lo6/n, (ad6-av6)/n, with_sum/n, without_sum/n);
}
