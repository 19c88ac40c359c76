use adagan::adagan::{run_adagan, run_baseline, AdaganConfig, Baseline, BetaSchedule, TrainingContext};
use adagan::bench::{generate_toy_dataset, run_experiment, Algorithm, AlgorithmSpec, ExperimentConfig, Metric, ToyDatasetSpec};
use adagan::generators::{
    fit_discriminator, fit_gaussian_mixture_em, Discriminator, DiscriminatorMode, Gaussian, Generator,
    GeneratorMixture, Point, WeakGenerator, WeakLearner, WeightedSample,
};
use adagan::metrics::{coverage_c, kde_fit, log_likelihood_l, log_spaced};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn kde_bandwidth_is_in_a_sane_band_and_duplication_invariant() {
    let mut r = rng(1);
    let data = Gaussian::standard(2).unwrap().sample(2000, &mut r);
    let grid = log_spaced(0.05, 1.0, 12);
    let kde = kde_fit(&data, &grid, 5, &mut r).unwrap();
    assert!((0.1..=0.6).contains(&kde.bandwidth()), "{}", kde.bandwidth());

    let small = &data[..400];
    let doubled: Vec<Point> = small.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
    let a = kde_fit(small, &grid, 5, &mut rng(2)).unwrap().bandwidth();
    let b = kde_fit(&doubled, &grid, 5, &mut rng(2)).unwrap().bandwidth();
    assert_eq!(a, b);

    assert!(kde_fit(&data[..1], &grid, 5, &mut r).is_err());
}

#[test]
fn em_with_all_mass_on_one_cluster_recovers_it() {
    let mut r = rng(3);
    let a = Gaussian::isotropic(&[-5.0, 0.0], 1.0).unwrap();
    let b = Gaussian::isotropic(&[5.0, 0.0], 1.0).unwrap();
    let mut points = a.sample(600, &mut r);
    points.extend(b.sample(600, &mut r));
    let weights: Vec<f64> = (0..1200).map(|i| if i < 600 { 1.0 } else { 0.0 }).collect();
    let sample = WeightedSample::from_weights(points.clone(), &weights).unwrap();
    let fit = fit_gaussian_mixture_em(&sample, 2, 3, &mut r).unwrap();

    let held_out = a.sample(2000, &mut r);
    let analytic = log_likelihood_l(|x| a.log_density(x), &held_out).unwrap();
    let fitted = log_likelihood_l(|x| fit.mixture.log_density(x), &held_out).unwrap();
    assert!(fitted >= analytic - 0.1, "{fitted} vs {analytic}");
    // weight trace is nondecreasing up to rounding
    for w in fit.log_likelihood_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-6 * w[0].abs());
    }
}

#[test]
fn coverage_of_flat_and_fitted_models() {
    let mut r = rng(4);
    let data = Gaussian::isotropic(&[0.0, 0.0], 1.0).unwrap().sample(2000, &mut r);
    // a flat density on a box holding every data point
    let inside = |x: &[f64]| if x.iter().all(|v| v.abs() <= 10.0) { 0.0 } else { f64::NEG_INFINITY };
    let box_samples: Vec<Point> = (0..500)
        .map(|i| vec![-10.0 + 20.0 * (i % 25) as f64 / 24.0, -10.0 + 20.0 * (i / 25) as f64 / 19.0])
        .collect();
    assert_eq!(coverage_c(inside, &box_samples, &data).unwrap(), 1.0);

    let kde = kde_fit(&data[..1000], &log_spaced(0.05, 1.0, 10), 5, &mut r).unwrap();
    let model_samples: Vec<Point> = (0..5000)
        .map(|i| {
            let mut x = data[i % 1000].clone();
            let g = Gaussian::isotropic(&[0.0, 0.0], kde.bandwidth()).unwrap().sample_one(&mut r);
            x[0] += g[0];
            x[1] += g[1];
            x
        })
        .collect();
    let c = coverage_c(|x| kde.log_density(x), &model_samples, &data[1000..]).unwrap();
    assert!((0.9..=1.0).contains(&c), "{c}");
}

#[test]
fn classifier_discriminator_limits() {
    let mut r = rng(5);
    let g = Gaussian::isotropic(&[1.0, -1.0], 1.0).unwrap();
    let model = GeneratorMixture::single(WeakGenerator::Gaussian(g.clone()));
    let data = g.sample(5000, &mut r);
    let d = fit_discriminator(&data, &model, DiscriminatorMode::Classifier, &mut r).unwrap();
    let held_out = g.sample(2000, &mut r);
    let mean_gap: f64 = d.predict_many(&held_out).iter().map(|v| (v - 0.5).abs()).sum::<f64>() / 2000.0;
    assert!(mean_gap <= 0.05, "{mean_gap}");

    let far = Gaussian::isotropic(&[12.0, 12.0], 1.0).unwrap().sample(2000, &mut r);
    let d = fit_discriminator(&far, &model, DiscriminatorMode::Classifier, &mut r).unwrap();
    let mean: f64 = d.predict_many(&far).iter().sum::<f64>() / 2000.0;
    assert!(mean >= 0.95, "{mean}");
}

#[test]
fn boosting_bookkeeping_and_determinism() {
    let spec = ToyDatasetSpec {
        mode_count: 3,
        train_size: 1500,
        test_size: 10,
        ..ToyDatasetSpec::default()
    };
    let data = generate_toy_dataset(&spec).unwrap().train;
    let config = AdaganConfig {
        iterations: 5,
        schedule: BetaSchedule::OneOverT,
    };
    let run = |seed| {
        let mut ctx = TrainingContext::new(WeakLearner::default(), DiscriminatorMode::Oracle);
        run_adagan(&data, &config, &mut ctx, &mut rng(seed)).unwrap()
    };
    let a = run(6);
    for alpha in a.mixture.alphas() {
        assert!((alpha - 0.2).abs() < 1e-12);
    }
    assert_eq!(a.iterations.len(), 5);
    assert_eq!(
        serde_json::to_string(&a.mixture).unwrap(),
        serde_json::to_string(&run(6).mixture).unwrap()
    );

    let one = AdaganConfig {
        iterations: 1,
        schedule: BetaSchedule::OneOverT,
    };
    let mut ctx = TrainingContext::new(WeakLearner::default(), DiscriminatorMode::Oracle);
    let boosted = run_adagan(&data, &one, &mut ctx, &mut rng(7)).unwrap().mixture;
    let vanilla = run_baseline(&data, Baseline::Vanilla, &mut ctx, &mut rng(7)).unwrap();
    assert_eq!(boosted, vanilla);
    let ensemble = run_baseline(&data, Baseline::Ensemble { t: 1 }, &mut ctx, &mut rng(7)).unwrap();
    assert_eq!(ensemble, vanilla);
}

#[test]
fn baseline_orderings_over_repeats() {
    let dataset = ToyDatasetSpec {
        train_size: 2000,
        test_size: 2000,
        ..ToyDatasetSpec::with_modes(5)
    };
    let mut config = ExperimentConfig::new(
        dataset,
        vec![
            AlgorithmSpec::named("vanilla", Algorithm::Vanilla),
            AlgorithmSpec::named("best", Algorithm::BestOfT { t: 3 }),
            AlgorithmSpec::named("ensemble", Algorithm::Ensemble { t: 10 }),
        ],
    );
    config.repeats = 15;
    config.metrics = vec![Metric::Coverage];
    config.model_samples = 2000;
    let report = run_experiment(&config).unwrap();
    let median = |name: &str, t: usize| report.row(name, t, Metric::Coverage).unwrap().median.unwrap();
    assert!(median("best", 3) >= median("vanilla", 1));
    assert!(median("ensemble", 10) >= median("ensemble", 3));
    assert!(report.failures.is_empty());
}
