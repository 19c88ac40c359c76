use adagan::adagan::update_training_weights;
use adagan::bench::format_g6;
use adagan::discrete_theory::{g_lambda, lambda_star_empirical, solve_lambda_star};
use adagan::divergence::{f_divergence, normalized_f_divergence, DiscreteDistribution, FDivergenceKind};
use adagan::generators::{Gaussian, GeneratorMixture, WeakGenerator};
use adagan::metrics::coverage_from_values;
use proptest::prelude::*;

fn masses(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.01f64..1.0], n)
        .prop_filter("some mass", |v| v.iter().any(|x| *x > 0.0))
}

fn pair() -> impl Strategy<Value = (DiscreteDistribution, DiscreteDistribution)> {
    (2usize..=12).prop_flat_map(|n| (masses(n..=n), masses(n..=n))).prop_map(|(a, b)| {
        (
            DiscreteDistribution::from_weights(&a).unwrap(),
            DiscreteDistribution::from_weights(&b).unwrap(),
        )
    })
}

fn kind() -> impl Strategy<Value = FDivergenceKind> {
    prop::sample::select(FDivergenceKind::ALL.to_vec())
}

proptest! {
    #[test]
    fn divergence_is_nonnegative_and_f0_agrees((q, p) in pair(), kind in kind()) {
        let d = f_divergence(kind, &q, &p).unwrap();
        prop_assert!(d >= -1e-12);
        let d0 = normalized_f_divergence(kind, &q, &p).unwrap();
        if d.is_finite() {
            prop_assert!((d - d0).abs() <= 1e-9 * (1.0 + d.abs()), "{} vs {}", d, d0);
        } else {
            prop_assert!(d0.is_infinite());
        }
        prop_assert!(f_divergence(kind, &p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn lambda_star_normalizes((p_d, p_g) in pair(), beta in 0.01f64..=1.0) {
        let r = solve_lambda_star(beta, &p_d, &p_g).unwrap();
        let g = g_lambda(r.lambda, beta, &p_d, &p_g).unwrap();
        prop_assert!((g - beta).abs() <= 1e-10, "g(lambda*) = {}", g);
        prop_assert!(r.lambda >= beta - 1e-12 && r.lambda <= 1.0 + 1e-12);
    }

    #[test]
    fn weights_sum_to_one_and_follow_the_ratio(
        d in prop::collection::vec(0.001f64..0.999, 1..60),
        beta in 0.01f64..=1.0,
    ) {
        let p = vec![1.0 / d.len() as f64; d.len()];
        let w = update_training_weights(&d, &p, beta).unwrap();
        let total: f64 = w.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        // a larger D means a smaller density ratio, hence no smaller weight
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d[j] - d[i] > 1e-9 {
                    prop_assert!(w[i] <= w[j] + 1e-15);
                    prop_assert!(w[i] < w[j] || w[i] == 0.0);
                }
            }
        }
    }

    #[test]
    fn lambda_shifts_with_the_ratios(
        h in prop::collection::vec(0.05f64..20.0, 1..30),
        beta in 0.05f64..0.95,
        shift in 0.0f64..2.0,
    ) {
        let p = vec![1.0 / h.len() as f64; h.len()];
        let a = lambda_star_empirical(beta, &p, &h).unwrap().lambda;
        let shifted: Vec<f64> = h.iter().map(|x| x + shift).collect();
        let b = lambda_star_empirical(beta, &p, &shifted).unwrap().lambda;
        // adding c to every ratio shifts λ* by exactly (1-β)c
        prop_assert!((b - a - (1.0 - beta) * shift).abs() <= 1e-10);
    }

    #[test]
    fn alphas_stay_normalized(betas in prop::collection::vec(0.01f64..=1.0, 1..25)) {
        let g = || WeakGenerator::Gaussian(Gaussian::standard(1).unwrap());
        let mut m = GeneratorMixture::single(g());
        for beta in betas {
            m.add_component(g(), beta).unwrap();
            let total: f64 = m.alphas().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!((m.alphas().last().unwrap() - beta).abs() <= 1e-12);
        }
    }

    #[test]
    fn coverage_ignores_monotone_transforms(
        model in prop::collection::vec(-5.0f64..5.0, 100..300),
        data in prop::collection::vec(-5.0f64..5.0, 1..200),
    ) {
        let base = coverage_from_values(&model, &data).unwrap();
        let t = |v: &[f64]| v.iter().map(|x| x.exp() * 3.0 + 1.0).collect::<Vec<_>>();
        prop_assert_eq!(base, coverage_from_values(&t(&model), &t(&data)).unwrap());
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn g6_keeps_six_significant_digits(x in prop::num::f64::NORMAL) {
        let s = format_g6(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs(), "{} -> {}", x, s);
        prop_assert_eq!(format_g6(back), s);
    }
}
