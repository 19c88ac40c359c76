//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so the output reads as a checklist:
//! `cargo test --test acceptance`. Exits non-zero if any criterion fails.

use std::fs;
use std::time::Instant;

use adagan::adagan::{reweight_against, update_training_weights, BetaSchedule, TrainingContext};
use adagan::bench::{generate_toy_dataset, run_experiment, Algorithm, AlgorithmSpec, ExperimentConfig, Metric, ToyDatasetSpec};
use adagan::cli::cli_main;
use adagan::discrete_theory::{
    finite_convergence_bound, greedy_optimal_iteration, lambda_star_empirical, lambda_star_empirical_bisection,
};
use adagan::divergence::{DiscreteDistribution, FDivergenceKind};
use adagan::generators::{
    DiscriminatorMode, Gaussian, Generator, GeneratorMixture, WeakGenerator, WeakLearner, WeightedSample,
};
use adagan::metrics::{coverage_c, log_likelihood_l};
use adagan::theory_verify::{random_distribution, random_simplex, run_verification, ZERO_ATOM_PROBABILITY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let report = run_verification(0, 200, 16).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let worst = report
        .properties
        .iter()
        .map(|p| p.worst_violation)
        .fold(f64::NEG_INFINITY, f64::max);
    let failed: Vec<&str> = report.failed().map(|p| p.id.as_str()).collect();
    check(
        report.all_passed && report.properties.len() >= 14 && worst <= 1e-9 && elapsed <= 120.0,
        format!(
            "{} properties, failed {failed:?}, worst violation {worst:.3e}, {elapsed:.1} s",
            report.properties.len()
        ),
    )
}

const RATE_KINDS: [FDivergenceKind; 4] = [
    FDivergenceKind::JensenShannon,
    FDivergenceKind::KullbackLeibler,
    FDivergenceKind::TotalVariation,
    FDivergenceKind::SquaredHellinger,
];

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checks = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for instance in 0..100 {
        let n = rng.random_range(2..=32);
        let p_d = random_distribution(&mut rng, n, ZERO_ATOM_PROBABILITY);
        let p_1 = random_distribution(&mut rng, n, ZERO_ATOM_PROBABILITY);
        for beta in [0.1, 0.3, 0.5] {
            for kind in RATE_KINDS {
                let trace = greedy_optimal_iteration(&p_d, &p_1, beta, 20, kind).map_err(|e| e.to_string())?;
                let d1 = trace.steps[0].divergence;
                for step in &trace.steps {
                    let bound = (1.0 - beta).powi(step.t as i32 - 1) * d1 + 1e-9;
                    checks += 1;
                    if step.divergence.is_finite() {
                        worst = worst.max(step.divergence - bound);
                    }
                    if step.divergence > bound || step.divergence.is_nan() {
                        return Err(format!(
                            "instance {instance}, {kind:?}, beta {beta}, t {}: {} > {bound}",
                            step.t, step.divergence
                        ));
                    }
                }
            }
        }
    }
    Ok(format!("{checks} steps within the geometric bound, worst excess {worst:.3e}"))
}

fn criterion_3() -> Outcome {
    let p_d = DiscreteDistribution::new(vec![0.5, 0.5]).map_err(|e| e.to_string())?;
    let p_1 = DiscreteDistribution::new(vec![0.99, 0.01]).map_err(|e| e.to_string())?;
    let bound = finite_convergence_bound(&p_d, &p_1, 0.2).map_err(|e| e.to_string())?;
    for kind in RATE_KINDS {
        let trace = greedy_optimal_iteration(&p_d, &p_1, 0.2, 8, kind).map_err(|e| e.to_string())?;
        let updates = trace.updates_until(1e-12);
        if updates != Some(4) || bound != Some(4) {
            return Err(format!("{kind:?}: {updates:?} updates, bound {bound:?}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut largest = 0;
    for instance in 0..100 {
        let n = rng.random_range(2..=32);
        // half of the mass spread uniformly keeps the density ratio bounded
        let p_d: Vec<f64> = random_simplex(&mut rng, n).iter().map(|m| 0.5 * m + 0.5 / n as f64).collect();
        let p_d = DiscreteDistribution::from_weights(&p_d).map_err(|e| e.to_string())?;
        let p_1 = random_distribution(&mut rng, n, ZERO_ATOM_PROBABILITY);
        let beta = rng.random_range(0.1..0.5);
        let bound = finite_convergence_bound(&p_d, &p_1, beta)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("instance {instance}: no bound for a dominated model"))?;
        largest = largest.max(bound);
        for kind in [FDivergenceKind::TotalVariation, FDivergenceKind::JensenShannon] {
            let trace = greedy_optimal_iteration(&p_d, &p_1, beta, bound + 1, kind).map_err(|e| e.to_string())?;
            match trace.updates_until(1e-12) {
                Some(u) if u <= bound => {}
                other => return Err(format!("instance {instance}, {kind:?}: {other:?} updates, bound {bound}")),
            }
        }
    }
    Ok(format!("fixture converges in 4 updates = bound; 100 random instances within bound (largest {largest})"))
}

fn to_discriminator(h: f64) -> f64 {
    1.0 / (1.0 + h)
}

fn criterion_4() -> Outcome {
    let p = [0.25; 4];
    let h = [0.25, 2.0 / 3.0, 1.0, 4.0];
    let lambda = lambda_star_empirical(0.5, &p, &h).map_err(|e| e.to_string())?.lambda;
    let d: Vec<f64> = h.iter().map(|&x| to_discriminator(x)).collect();
    let w = update_training_weights(&d, &p, 0.5).map_err(|e| e.to_string())?;
    let want = [31.0 / 72.0, 47.0 / 144.0, 35.0 / 144.0, 0.0];
    let fixture_ok = (lambda - 71.0 / 72.0).abs() <= 1e-12 && w.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-12);
    if !fixture_ok {
        return Err(format!("fixture: lambda {lambda}, weights {w:?}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_sum, mut worst_gap) = (0.0f64, 0.0f64);
    for instance in 0..10_000 {
        let n = rng.random_range(1..=40);
        let beta = if rng.random_bool(0.05) { 1.0 } else { rng.random_range(1e-3..1.0) };
        let p = random_simplex(&mut rng, n);
        let mut h: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0f64..3.0).exp()).collect();
        if n > 2 && rng.random_bool(0.3) {
            h[1] = h[0];
        }
        let r = lambda_star_empirical(beta, &p, &h).map_err(|e| e.to_string())?;
        let bisect = lambda_star_empirical_bisection(beta, &p, &h).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max((r.lambda - bisect).abs());

        let mut sorted = h.clone();
        sorted.sort_by(f64::total_cmp);
        let k = r.active_count;
        let lower = (1.0 - beta) * sorted[k - 1];
        let upper = sorted.get(k).map_or(f64::INFINITY, |x| (1.0 - beta) * x);
        if !(lower < r.lambda && r.lambda <= upper) {
            return Err(format!("instance {instance}: sandwich {lower} < {} <= {upper} fails", r.lambda));
        }

        let total: f64 = p
            .iter()
            .zip(&h)
            .map(|(pi, hi)| pi / beta * (r.lambda - (1.0 - beta) * hi).max(0.0))
            .sum();
        let d: Vec<f64> = h.iter().map(|&x| to_discriminator(x)).collect();
        let library: f64 = update_training_weights(&d, &p, beta).map_err(|e| e.to_string())?.iter().sum();
        worst_sum = worst_sum.max((total - 1.0).abs()).max((library - 1.0).abs());
    }
    check(
        worst_sum <= 1e-9 && worst_gap <= 1e-10,
        format!("fixture exact; 10^4 instances: max |sum w - 1| {worst_sum:.2e}, max solver gap {worst_gap:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig::desk_scale(
        5,
        vec![
            AlgorithmSpec::named("vanilla", Algorithm::Vanilla),
            AlgorithmSpec::named("ensemble", Algorithm::Ensemble { t: 10 }),
            AlgorithmSpec::named(
                "boosted",
                Algorithm::Adagan {
                    t: 10,
                    schedule: BetaSchedule::OneOverT,
                },
            ),
        ],
    );
    let report = run_experiment(&config).map_err(|e| e.to_string())?;
    let stat = |name: &str| -> Result<(f64, f64), String> {
        let row = report
            .final_row(name, Metric::Coverage)
            .ok_or_else(|| format!("no coverage row for {name}"))?;
        match (row.median, row.p5) {
            (Some(m), Some(p5)) => Ok((m, p5)),
            _ => Err(format!("{name}: every repeat failed")),
        }
    };
    let (vanilla, vanilla_p5) = stat("vanilla")?;
    let (ensemble, _) = stat("ensemble")?;
    let (boosted, boosted_p5) = stat("boosted")?;
    let elapsed = start.elapsed().as_secs_f64();
    check(
        boosted >= ensemble && ensemble >= vanilla && boosted >= 0.9 && boosted_p5 >= vanilla_p5 && elapsed <= 600.0,
        format!(
            "median C boosted {boosted:.3} / ensemble {ensemble:.3} / vanilla {vanilla:.3}; p5 boosted {boosted_p5:.3} vs vanilla {vanilla_p5:.3}; {} failed repeats; {elapsed:.1} s",
            report.failures.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = Gaussian::standard(2).map_err(|e| e.to_string())?;
    let model_samples = model.sample(5000, &mut rng);
    let data = model.sample(5000, &mut rng);
    let itself = coverage_c(|x| model.log_density(x), &model_samples, &data).map_err(|e| e.to_string())?;

    let left = Gaussian::isotropic(&[-10.0, 0.0], 1.0).map_err(|e| e.to_string())?;
    let right = Gaussian::isotropic(&[10.0, 0.0], 1.0).map_err(|e| e.to_string())?;
    let truth = GeneratorMixture::uniform(vec![WeakGenerator::Gaussian(left.clone()), WeakGenerator::Gaussian(right)])
        .map_err(|e| e.to_string())?;
    let data = truth.sample(5000, &mut rng);
    let model_samples = left.sample(5000, &mut rng);
    let half = coverage_c(|x| left.log_density(x), &model_samples, &data).map_err(|e| e.to_string())?;
    check(
        (0.93..=0.97).contains(&itself) && (0.45..=0.55).contains(&half),
        format!("self coverage {itself:.4}, half-covered coverage {half:.4}"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = Gaussian::standard(1).map_err(|e| e.to_string())?;
    let data = model.sample(10_000, &mut rng);
    let l = log_likelihood_l(|x| model.log_density(x), &data).map_err(|e| e.to_string())?;
    let want = -0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln());
    check((l - want).abs() <= 0.1, format!("L = {l:.4}, analytic {want:.4}"))
}

fn criterion_8() -> Outcome {
    let spec = ToyDatasetSpec {
        mode_count: 2,
        train_size: 4000,
        test_size: 100,
        ..ToyDatasetSpec::default()
    };
    let dataset = generate_toy_dataset(&spec).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let learner = WeakLearner::default();
    let sample = WeightedSample::uniform(dataset.train.clone()).map_err(|e| e.to_string())?;
    let first = learner.fit(&sample, &mut rng).map_err(|e| e.to_string())?;
    let WeakGenerator::Gaussian(g) = &first else {
        return Err("mode-seeking learner returned a non-Gaussian".into());
    };
    let covered = dataset.nearest_mode(g.mean());
    let c = &dataset.centers[covered];
    let offset = ((g.mean()[0] - c[0]).powi(2) + (g.mean()[1] - c[1]).powi(2)).sqrt();
    if offset > dataset.sigma {
        return Err(format!("first fit is {offset:.3} from the nearest center; it covers neither mode"));
    }

    let mut ctx = TrainingContext::new(learner, DiscriminatorMode::Oracle);
    let round = reweight_against(&dataset.train, &GeneratorMixture::single(first), 0.5, &mut ctx, &mut rng)
        .map_err(|e| e.to_string())?;
    let uncovered: f64 = dataset
        .train
        .iter()
        .zip(&round.weights)
        .filter(|(x, _)| dataset.nearest_mode(x) != covered)
        .map(|(_, w)| w)
        .sum();
    let total: f64 = round.weights.iter().sum();
    let share = uncovered / total;
    check(share >= 0.8, format!("{:.1}% of round-2 weight on the uncovered mode", 100.0 * share))
}

const DETERMINISM_CONFIG: &str = r#"{
  "dataset": { "mode_count": 3, "train_size": 800, "test_size": 400 },
  "algorithms": [
    { "type": "vanilla" },
    { "type": "ensemble", "t": 2 },
    { "type": "top_k", "r": 0.5, "t": 2 },
    { "type": "adagan", "t": 3, "schedule": { "type": "one_over_t" } }
  ],
  "repeats": 3,
  "master_seed": 11,
  "model_samples": 500
}"#;

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("bench.json");
    fs::write(&config, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let mut sizes = Vec::new();
    for format in ["csv", "json"] {
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let out = dir.path().join(format!("{format}_{run}"));
            let code = cli_main([
                "adagan",
                "bench",
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--format",
                format,
            ]);
            if code != 0 {
                return Err(format!("bench exited with {code}"));
            }
            outputs.push(fs::read(out.join(format!("report.{format}"))).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{format} reports differ"));
        }
        sizes.push(format!("{format} {} bytes", outputs[0].len()));
    }
    Ok(format!("identical reports ({})", sizes.join(", ")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("theory verification suite", criterion_1),
        ("exponential rate of the greedy iteration", criterion_2),
        ("finite-step convergence", criterion_3),
        ("empirical lambda solver exactness", criterion_4),
        ("desk-scale coverage ordering", criterion_5),
        ("coverage calibration", criterion_6),
        ("likelihood calibration", criterion_7),
        ("reweighting toward the uncovered mode", criterion_8),
        ("bench determinism", criterion_9),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
