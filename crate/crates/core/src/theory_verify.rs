//! Randomized verification of the discrete engine.
//!
//! Each property draws its own instances from a ChaCha stream keyed by the
//! master seed and the property's position in [`PROPERTIES`], so the report
//! does not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete_theory::{
    g_lambda, lambda_star_bisection, lambda_star_empirical, lambda_star_empirical_bisection, solve_lambda_dagger,
    solve_lambda_star, greedy_optimal_iteration, OptimalTargetResult,
};
use crate::divergence::{
    conjugate_divergence_slices, density_ratio_from_discriminator, f0_divergence_slices, f_divergence_slices,
    js_decomposition_check, DiscreteDistribution, FDivergenceKind,
};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_CANDIDATES: usize = 10_000;
/// Probability that a random atom is zeroed.
pub const ZERO_ATOM_PROBABILITY: f64 = 0.25;
const DIVERGENCE_MAX_SUPPORT: usize = 64;
const DIVERGENCE_PAIRS_PER_INSTANCE: usize = 50;
const GREEDY_STEPS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub seed: u64,
    pub instances: usize,
    pub max_support: usize,
    /// Random candidate distributions per brute-force instance.
    pub candidates: usize,
}

impl VerifySettings {
    pub fn new(seed: u64, instances: usize, max_support: usize) -> Self {
        Self {
            seed,
            instances,
            max_support,
            candidates: DEFAULT_CANDIDATES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub kind: Option<FDivergenceKind>,
    pub beta: Option<f64>,
    pub p_d: Vec<f64>,
    pub p_g: Vec<f64>,
    pub candidate: Option<Vec<f64>>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub id: String,
    pub description: String,
    pub tolerance: f64,
    pub instances: usize,
    pub checks: usize,
    pub failures: usize,
    /// Largest `lhs - rhs` over all checks (clamped to a finite value).
    pub worst_violation: f64,
    /// `worst_violation - tolerance`; positive exactly when a check failed.
    pub worst_excess: f64,
    pub seed: u64,
    pub stream: u64,
    pub passed: bool,
    pub counterexample: Option<Counterexample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub instances_per_property: usize,
    pub max_support: usize,
    pub candidates: usize,
    pub all_passed: bool,
    pub properties: Vec<PropertyRecord>,
}

impl VerificationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn failed(&self) -> impl Iterator<Item = &PropertyRecord> {
        self.properties.iter().filter(|p| !p.passed)
    }
}

struct Tracker {
    tolerance: f64,
    instances: usize,
    checks: usize,
    failures: usize,
    worst: f64,
    counterexample: Option<Counterexample>,
}

impl Tracker {
    fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            instances: 0,
            checks: 0,
            failures: 0,
            worst: f64::NEG_INFINITY,
            counterexample: None,
        }
    }

    /// Records a check whose `violation` must not exceed the tolerance.
    fn record(&mut self, violation: f64, context: impl FnOnce() -> Counterexample) {
        self.checks += 1;
        let violation = if violation.is_nan() { f64::INFINITY } else { violation };
        if violation > self.worst {
            self.worst = violation;
        }
        if violation > self.tolerance {
            self.failures += 1;
            if self.counterexample.is_none() {
                let mut c = context();
                c.detail = format!("{} (violation {violation:e})", c.detail);
                self.counterexample = Some(c);
            }
        }
    }

    fn finish(self, spec: &PropertySpec, seed: u64, stream: u64) -> PropertyRecord {
        let worst = if self.checks == 0 { 0.0 } else { self.worst.clamp(f64::MIN, f64::MAX) };
        PropertyRecord {
            id: spec.id.to_string(),
            description: spec.description.to_string(),
            tolerance: self.tolerance,
            instances: self.instances,
            checks: self.checks,
            failures: self.failures,
            worst_violation: worst,
            worst_excess: worst - self.tolerance,
            seed,
            stream,
            passed: self.failures == 0,
            counterexample: self.counterexample,
        }
    }
}

/// `lhs - rhs` for an inequality `lhs ≤ rhs` over the extended reals.
fn excess(lhs: f64, rhs: f64) -> f64 {
    if lhs == rhs {
        0.0
    } else {
        lhs - rhs
    }
}

/// `|a - b|` for an equality over the extended reals.
fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

struct PropertySpec {
    id: &'static str,
    description: &'static str,
    tolerance: f64,
    run: fn(&mut ChaCha8Rng, &VerifySettings, &mut Tracker),
}

/// The verified properties, in report order.
pub const PROPERTY_IDS: [&str; 20] = [
    "divergence.nonnegative",
    "divergence.normalized-generator",
    "divergence.conjugate-swap",
    "divergence.joint-convexity",
    "divergence.hilbertian-triangle",
    "divergence.ratio-map",
    "divergence.js-decomposition",
    "optimal.brute-force",
    "optimal.f-independence",
    "optimal.lambda-bounds",
    "surrogate.brute-force",
    "improvement-bound",
    "refined-m-bound",
    "lambda-one-equivalence",
    "solver-cross-check",
    "g-right-derivative",
    "lambda-relations",
    "upper-bounds",
    "weak-to-strong",
    "greedy-exponential-rate",
];

const PROPERTIES: [PropertySpec; 20] = [
    PropertySpec {
        id: PROPERTY_IDS[0],
        description: "D_f(Q||P) >= 0 for every kind",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_nonnegative,
    },
    PropertySpec {
        id: PROPERTY_IDS[1],
        description: "D_f = D_{f0} with f0(u) = f(u) - (u-1) f'(1)",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_normalized_generator,
    },
    PropertySpec {
        id: PROPERTY_IDS[2],
        description: "D_f(P||Q) = D_{f conjugate}(Q||P)",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_conjugate_swap,
    },
    PropertySpec {
        id: PROPERTY_IDS[3],
        description: "D_f is jointly convex",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_joint_convexity,
    },
    PropertySpec {
        id: PROPERTY_IDS[4],
        description: "sqrt(D_f) satisfies the triangle inequality for JS, Hellinger and TV",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_hilbertian_triangle,
    },
    PropertySpec {
        id: PROPERTY_IDS[5],
        description: "h(d) = (1-d)/d is decreasing with h(0.5) = 1",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_ratio_map,
    },
    PropertySpec {
        id: PROPERTY_IDS[6],
        description: "JS(P,Q) = KL(Q||M) + KL(P||M)",
        tolerance: 1e-10,
        run: prop_js_decomposition,
    },
    PropertySpec {
        id: PROPERTY_IDS[7],
        description: "Q* minimizes D_f((1-b)P_g + bQ || P_d) against random candidates",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_optimal_brute_force,
    },
    PropertySpec {
        id: PROPERTY_IDS[8],
        description: "one Q* (cross-checked by bisection) is locally optimal for every kind",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_optimal_f_independence,
    },
    PropertySpec {
        id: PROPERTY_IDS[9],
        description: "b <= lambda* <= min(1, b/delta)",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_optimal_lambda_bounds,
    },
    PropertySpec {
        id: PROPERTY_IDS[10],
        description: "Q-dagger minimizes D_f(P_g || (P_d - bQ)/(1-b)) over b q <= p_d",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_surrogate_brute_force,
    },
    PropertySpec {
        id: PROPERTY_IDS[11],
        description: "adding Q* or Q-dagger shrinks the divergence by at least (1-b)",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_improvement_bound,
    },
    PropertySpec {
        id: PROPERTY_IDS[12],
        description: "D_f(mixture||P_d) <= f(lambda*) + f(M)(1-lambda*)/(M-1)",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_refined_m_bound,
    },
    PropertySpec {
        id: PROPERTY_IDS[13],
        description: "lambda* = 1 iff the optimal mixture matches P_d",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_lambda_one_equivalence,
    },
    PropertySpec {
        id: PROPERTY_IDS[14],
        description: "empirical, exact and bisection lambda* agree; weights normalize",
        tolerance: 1e-10,
        run: prop_solver_cross_check,
    },
    PropertySpec {
        id: PROPERTY_IDS[15],
        description: "right derivative of g equals P_d(lambda dP_d >= (1-b) dP_g)",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_g_right_derivative,
    },
    PropertySpec {
        id: PROPERTY_IDS[16],
        description: "lambda-dagger >= max(1, lambda*) and lambda* lambda-dagger >= 1",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_lambda_relations,
    },
    PropertySpec {
        id: PROPERTY_IDS[17],
        description: "mixture divergence below both joint-convexity/triangle upper bounds",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_upper_bounds,
    },
    PropertySpec {
        id: PROPERTY_IDS[18],
        description: "gamma-close components give the (1-b(1-gamma)) and Hilbertian contractions",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_weak_to_strong,
    },
    PropertySpec {
        id: PROPERTY_IDS[19],
        description: "greedy optimal updates contract at rate (1-b)^(t-1) and never increase",
        tolerance: DEFAULT_TOLERANCE,
        run: prop_greedy_rate,
    },
];

/// Runs every property with the default candidate count.
pub fn run_verification(seed: u64, instances_per_property: usize, max_support: usize) -> Result<VerificationReport> {
    run_verification_with(&VerifySettings::new(seed, instances_per_property, max_support))
}

pub fn run_verification_with(settings: &VerifySettings) -> Result<VerificationReport> {
    if settings.instances == 0 {
        return Err(Error::Validation("instances per property must be at least 1".into()));
    }
    if settings.max_support < 2 {
        return Err(Error::Validation("max support must be at least 2".into()));
    }
    if settings.candidates == 0 {
        return Err(Error::Validation("candidate count must be at least 1".into()));
    }
    let properties: Vec<PropertyRecord> = PROPERTIES
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let stream = i as u64 + 1;
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(stream);
            let mut tracker = Tracker::new(spec.tolerance);
            (spec.run)(&mut rng, settings, &mut tracker);
            tracker.finish(spec, settings.seed, stream)
        })
        .collect();
    Ok(VerificationReport {
        seed: settings.seed,
        instances_per_property: settings.instances,
        max_support: settings.max_support,
        candidates: settings.candidates,
        all_passed: properties.iter().all(|p| p.passed),
        properties,
    })
}

// ---------------------------------------------------------------------------
// Random instances

/// Uniform draw from the simplex (normalized exponentials).
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x: f64| x / total).collect()
}

/// Simplex draw with each atom zeroed independently with probability `zero_prob`.
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize, zero_prob: f64) -> DiscreteDistribution {
    loop {
        let mut raw = random_simplex(rng, n);
        for m in raw.iter_mut() {
            if rng.random_bool(zero_prob) {
                *m = 0.0;
            }
        }
        if raw.iter().any(|&m| m > 0.0) {
            return DiscreteDistribution::from_weights(&raw).expect("positive weights");
        }
    }
}

/// Candidate distributions for brute-force searches: dense, sparse and spiky.
fn random_candidate<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = match rng.random_range(0..4) {
        0 | 1 => random_simplex(rng, n),
        2 => random_distribution(rng, n, 0.5).masses().to_vec(),
        _ => {
            let gamma = Gamma::new(0.2, 1.0).expect("valid gamma");
            let mut v: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
            if v.iter().all(|&x| x == 0.0) {
                v[rng.random_range(0..n)] = 1.0;
            }
            v
        }
    };
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

#[derive(Clone, Debug)]
struct Instance {
    beta: f64,
    p_d: DiscreteDistribution,
    p_g: DiscreteDistribution,
}

impl Instance {
    fn random<R: Rng + ?Sized>(rng: &mut R, max_support: usize) -> Self {
        let n = rng.random_range(2..=max_support);
        Self {
            beta: rng.random_range(0.05..0.95),
            p_d: random_distribution(rng, n, ZERO_ATOM_PROBABILITY),
            p_g: random_distribution(rng, n, ZERO_ATOM_PROBABILITY),
        }
    }

    /// An instance satisfying `P_d(dP_g = 0) < β`.
    fn feasible<R: Rng + ?Sized>(rng: &mut R, max_support: usize) -> Self {
        loop {
            let mut inst = Self::random(rng, max_support);
            let delta = inst.delta();
            if delta < 0.9 {
                if inst.beta <= delta {
                    inst.beta = rng.random_range((delta + 0.01)..0.95);
                }
                return inst;
            }
        }
    }

    /// An instance whose model charges only atoms the data charges.
    fn dominated<R: Rng + ?Sized>(rng: &mut R, max_support: usize) -> Self {
        let mut inst = Self::random(rng, max_support);
        let masked: Vec<f64> = inst
            .p_g
            .masses()
            .iter()
            .zip(inst.p_d.masses())
            .map(|(g, d)| if *d > 0.0 { *g } else { 0.0 })
            .collect();
        inst.p_g = if masked.iter().any(|&m| m > 0.0) {
            DiscreteDistribution::from_weights(&masked).expect("positive weights")
        } else {
            inst.p_d.clone()
        };
        inst
    }

    /// An instance with `(1-β) p_g ≤ p_d` everywhere, so `λ* = 1`.
    fn covered<R: Rng + ?Sized>(rng: &mut R, max_support: usize) -> Self {
        let n = rng.random_range(2..=max_support);
        let p_d = random_distribution(rng, n, ZERO_ATOM_PROBABILITY);
        let scaled: Vec<f64> = p_d.masses().iter().map(|d| d * rng.random_range(0.2..3.0)).collect();
        let p_g = DiscreteDistribution::from_weights(&scaled).expect("positive weights");
        let min_ratio = p_d
            .masses()
            .iter()
            .zip(p_g.masses())
            .filter(|(_, g)| **g > 0.0)
            .map(|(d, g)| d / g)
            .fold(f64::INFINITY, f64::min);
        let beta = if min_ratio >= 1.0 {
            rng.random_range(0.05..0.95)
        } else {
            1.0 - min_ratio * rng.random_range(0.05..0.95)
        };
        Self { beta, p_d, p_g }
    }

    fn delta(&self) -> f64 {
        self.p_d
            .masses()
            .iter()
            .zip(self.p_g.masses())
            .filter(|(_, g)| **g == 0.0)
            .map(|(d, _)| d)
            .sum()
    }

    fn context(&self, kind: Option<FDivergenceKind>, candidate: Option<&[f64]>, detail: &str) -> Counterexample {
        Counterexample {
            kind,
            beta: Some(self.beta),
            p_d: self.p_d.masses().to_vec(),
            p_g: self.p_g.masses().to_vec(),
            candidate: candidate.map(<[f64]>::to_vec),
            detail: detail.to_string(),
        }
    }
}

fn pair_context(p: &[f64], q: &[f64], kind: Option<FDivergenceKind>, detail: &str) -> Counterexample {
    Counterexample {
        kind,
        beta: None,
        p_d: p.to_vec(),
        p_g: q.to_vec(),
        candidate: None,
        detail: detail.to_string(),
    }
}

fn mixture_into(out: &mut [f64], a: &[f64], b: &[f64], beta: f64) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = (1.0 - beta) * x + beta * y;
    }
}

/// `(p_d - β q) / (1 - β)`, clamping rounding noise at zero.
fn residual(p_d: &[f64], q: &[f64], beta: f64) -> Vec<f64> {
    p_d.iter()
        .zip(q)
        .map(|(d, q)| ((d - beta * q) / (1.0 - beta)).max(0.0))
        .collect()
}

fn mixture(a: &[f64], b: &[f64], beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    mixture_into(&mut out, a, b, beta);
    out
}

/// Square root that absorbs rounding below zero.
fn root(x: f64) -> f64 {
    x.max(0.0).sqrt()
}

fn div(kind: FDivergenceKind, q: &[f64], p: &[f64]) -> f64 {
    f_divergence_slices(kind, q, p)
}

// ---------------------------------------------------------------------------
// Divergence properties

fn divergence_pairs(settings: &VerifySettings) -> usize {
    settings.instances * DIVERGENCE_PAIRS_PER_INSTANCE
}

fn prop_nonnegative(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..divergence_pairs(settings) {
        t.instances += 1;
        let n = rng.random_range(2..=DIVERGENCE_MAX_SUPPORT);
        let p = random_distribution(rng, n, ZERO_ATOM_PROBABILITY);
        let q = random_distribution(rng, n, ZERO_ATOM_PROBABILITY);
        for kind in FDivergenceKind::ALL {
            let d = div(kind, q.masses(), p.masses());
            t.record(-d, || pair_context(p.masses(), q.masses(), Some(kind), "negative divergence"));
        }
    }
}

fn prop_normalized_generator(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..divergence_pairs(settings) {
        t.instances += 1;
        let n = rng.random_range(2..=DIVERGENCE_MAX_SUPPORT);
        let p = random_distribution(rng, n, ZERO_ATOM_PROBABILITY);
        let q = random_distribution(rng, n, ZERO_ATOM_PROBABILITY);
        for kind in FDivergenceKind::ALL {
            let a = div(kind, q.masses(), p.masses());
            let b = f0_divergence_slices(kind, q.masses(), p.masses());
            t.record(gap(a, b), || pair_context(p.masses(), q.masses(), Some(kind), "D_f != D_f0"));
        }
    }
}

fn prop_conjugate_swap(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..divergence_pairs(settings) {
        t.instances += 1;
        let n = rng.random_range(2..=DIVERGENCE_MAX_SUPPORT);
        let p = random_distribution(rng, n, ZERO_ATOM_PROBABILITY);
        let q = random_distribution(rng, n, ZERO_ATOM_PROBABILITY);
        for kind in FDivergenceKind::ALL {
            let a = div(kind, p.masses(), q.masses());
            let b = conjugate_divergence_slices(kind, q.masses(), p.masses());
            t.record(gap(a, b), || pair_context(p.masses(), q.masses(), Some(kind), "D_f(P||Q) != D_f°(Q||P)"));
        }
    }
}

fn prop_joint_convexity(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..divergence_pairs(settings) {
        t.instances += 1;
        let n = rng.random_range(2..=DIVERGENCE_MAX_SUPPORT);
        let [p1, p2, q1, q2] =
            std::array::from_fn(|_| random_distribution(rng, n, ZERO_ATOM_PROBABILITY).masses().to_vec());
        let s: f64 = rng.random();
        let p = mixture(&p2, &p1, s);
        let q = mixture(&q2, &q1, s);
        for kind in FDivergenceKind::ALL {
            let lhs = div(kind, &q, &p);
            let a = div(kind, &q1, &p1);
            let b = div(kind, &q2, &p2);
            let rhs = if s == 0.0 {
                b
            } else if s == 1.0 {
                a
            } else {
                s * a + (1.0 - s) * b
            };
            t.record(excess(lhs, rhs), || pair_context(&p, &q, Some(kind), "joint convexity"));
        }
    }
}

fn prop_hilbertian_triangle(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..divergence_pairs(settings) {
        t.instances += 1;
        let n = rng.random_range(2..=DIVERGENCE_MAX_SUPPORT);
        let [p, q, r] = std::array::from_fn(|_| random_distribution(rng, n, ZERO_ATOM_PROBABILITY).masses().to_vec());
        for kind in FDivergenceKind::HILBERTIAN {
            let direct = root(div(kind, &p, &q));
            let detour = root(div(kind, &p, &r)) + root(div(kind, &r, &q));
            t.record(excess(direct, detour), || pair_context(&p, &q, Some(kind), "triangle inequality"));
        }
    }
}

fn prop_ratio_map(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    t.instances += 1;
    t.record(gap(density_ratio_from_discriminator(0.5), 1.0), || {
        pair_context(&[0.5], &[], None, "h(0.5) != 1")
    });
    for _ in 0..divergence_pairs(settings) {
        t.instances += 1;
        let a: f64 = rng.random_range(1e-6..(1.0 - 1e-6));
        let b: f64 = rng.random_range(1e-6..(1.0 - 1e-6));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if lo == hi {
            continue;
        }
        let (h_lo, h_hi) = (density_ratio_from_discriminator(lo), density_ratio_from_discriminator(hi));
        // strictly decreasing: h(hi) < h(lo)
        let violation = if h_hi < h_lo { h_hi - h_lo } else { f64::INFINITY };
        t.record(violation, || pair_context(&[lo, hi], &[], None, "h not decreasing"));
    }
}

fn prop_js_decomposition(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..divergence_pairs(settings) {
        t.instances += 1;
        let n = rng.random_range(2..=DIVERGENCE_MAX_SUPPORT);
        let p = random_distribution(rng, n, ZERO_ATOM_PROBABILITY);
        let q = random_distribution(rng, n, ZERO_ATOM_PROBABILITY);
        let (direct, split) = js_decomposition_check(&p, &q).expect("same support");
        t.record(gap(direct, split), || pair_context(p.masses(), q.masses(), None, "JS decomposition"));
    }
}

// ---------------------------------------------------------------------------
// Optimal-target properties

fn prop_optimal_brute_force(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..settings.instances {
        t.instances += 1;
        let inst = Instance::random(rng, settings.max_support);
        let star = solve_lambda_star(inst.beta, &inst.p_d, &inst.p_g).expect("valid instance");
        let (d, g) = (inst.p_d.masses(), inst.p_g.masses());
        let optimal_mix = mixture(g, star.target.masses(), inst.beta);
        let optimal: Vec<f64> = FDivergenceKind::ALL.iter().map(|&k| div(k, &optimal_mix, d)).collect();
        let mut buffer = vec![0.0; d.len()];
        for c in 0..settings.candidates {
            let candidate = match c {
                0 => d.to_vec(),
                1 => g.to_vec(),
                _ => random_candidate(rng, d.len()),
            };
            mixture_into(&mut buffer, g, &candidate, inst.beta);
            for (kind, &best) in FDivergenceKind::ALL.iter().zip(&optimal) {
                let value = div(*kind, &buffer, d);
                t.record(excess(best, value), || {
                    inst.context(Some(*kind), Some(&candidate), "candidate beats Q*")
                });
            }
        }
    }
}

fn target_from_lambda(inst: &Instance, lambda: f64) -> Vec<f64> {
    let raw: Vec<f64> = inst
        .p_d
        .masses()
        .iter()
        .zip(inst.p_g.masses())
        .map(|(d, g)| (lambda * d - (1.0 - inst.beta) * g).max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|m| m / total).collect()
}

fn prop_optimal_f_independence(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    const STEPS: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
    let directions = (settings.candidates / 100).max(10);
    for _ in 0..settings.instances {
        t.instances += 1;
        let inst = Instance::random(rng, settings.max_support);
        let star = solve_lambda_star(inst.beta, &inst.p_d, &inst.p_g).expect("valid instance");
        let lambda_oracle = lambda_star_bisection(inst.beta, &inst.p_d, &inst.p_g).expect("valid instance");
        let oracle_target = target_from_lambda(&inst, lambda_oracle);
        let diff = star
            .target
            .masses()
            .iter()
            .zip(&oracle_target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        t.record(diff, || inst.context(None, Some(&oracle_target), "bisection target differs"));

        let (d, g) = (inst.p_d.masses(), inst.p_g.masses());
        let optimal_mix = mixture(g, star.target.masses(), inst.beta);
        for _ in 0..directions {
            let direction = random_candidate(rng, d.len());
            for step in STEPS {
                let perturbed = mixture(star.target.masses(), &direction, step);
                let perturbed_mix = mixture(g, &perturbed, inst.beta);
                for kind in FDivergenceKind::ALL {
                    let best = div(kind, &optimal_mix, d);
                    let value = div(kind, &perturbed_mix, d);
                    t.record(excess(best, value), || {
                        inst.context(Some(kind), Some(&perturbed), "perturbation of Q* improves")
                    });
                }
            }
        }
    }
}

fn prop_optimal_lambda_bounds(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..settings.instances {
        t.instances += 1;
        let inst = Instance::random(rng, settings.max_support);
        let star = solve_lambda_star(inst.beta, &inst.p_d, &inst.p_g).expect("valid instance");
        let delta = inst.delta();
        let upper = if delta > 0.0 { (inst.beta / delta).min(1.0) } else { 1.0 };
        t.record(inst.beta - star.lambda, || inst.context(None, None, "lambda* < beta"));
        t.record(star.lambda - upper, || inst.context(None, None, "lambda* > min(1, beta/delta)"));
    }
}

/// Random `Q` with `β q ≤ p_d`: rejection first, then shrinkage toward `p_d`.
fn feasible_candidate<R: Rng + ?Sized>(rng: &mut R, p_d: &[f64], beta: f64) -> Vec<f64> {
    for _ in 0..8 {
        let c = random_candidate(rng, p_d.len());
        if c.iter().zip(p_d).all(|(q, d)| beta * q <= *d) {
            return c;
        }
    }
    let c = random_candidate(rng, p_d.len());
    // β (s c + (1-s) p_d) ≤ p_d  ⇔  s β (c - p_d) ≤ (1-β) p_d
    let s_max = c
        .iter()
        .zip(p_d)
        .filter(|(q, d)| *q > *d)
        .map(|(q, d)| (1.0 - beta) * d / (beta * (q - d)))
        .fold(1.0, f64::min);
    let s = s_max * rng.random_range(0.0..=1.0);
    c.iter().zip(p_d).map(|(q, d)| s * q + (1.0 - s) * d).collect()
}

fn prop_surrogate_brute_force(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..settings.instances {
        t.instances += 1;
        let inst = Instance::feasible(rng, settings.max_support);
        let dagger = solve_lambda_dagger(inst.beta, &inst.p_d, &inst.p_g).expect("feasible instance");
        let (d, g) = (inst.p_d.masses(), inst.p_g.masses());
        let optimal_residual = residual(d, dagger.target.masses(), inst.beta);
        let optimal: Vec<f64> = FDivergenceKind::ALL.iter().map(|&k| div(k, g, &optimal_residual)).collect();
        for c in 0..settings.candidates {
            let candidate = if c == 0 { d.to_vec() } else { feasible_candidate(rng, d, inst.beta) };
            let res = residual(d, &candidate, inst.beta);
            for (kind, &best) in FDivergenceKind::ALL.iter().zip(&optimal) {
                let value = div(*kind, g, &res);
                t.record(excess(best, value), || {
                    inst.context(Some(*kind), Some(&candidate), "candidate beats Q-dagger")
                });
            }
        }
    }
}

fn prop_improvement_bound(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for i in 0..settings.instances {
        t.instances += 1;
        let inst = if i % 2 == 0 {
            Instance::random(rng, settings.max_support)
        } else {
            Instance::feasible(rng, settings.max_support)
        };
        let (d, g, beta) = (inst.p_d.masses(), inst.p_g.masses(), inst.beta);
        let star = solve_lambda_star(beta, &inst.p_d, &inst.p_g).expect("valid instance");
        let dagger = solve_lambda_dagger(beta, &inst.p_d, &inst.p_g).ok();
        for kind in FDivergenceKind::ALL {
            let base = div(kind, g, d);
            let bound = if base.is_infinite() { base } else { (1.0 - beta) * base };
            let with_star = div(kind, &mixture(g, star.target.masses(), beta), d);
            t.record(excess(with_star, bound), || inst.context(Some(kind), None, "Q* improvement"));
            if let Some(dagger) = &dagger {
                let with_dagger = div(kind, &mixture(g, dagger.target.masses(), beta), d);
                t.record(excess(with_dagger, bound), || inst.context(Some(kind), None, "Q-dagger improvement"));
                let surrogate = div(kind, g, &residual(d, dagger.target.masses(), beta));
                t.record(excess(surrogate, base), || inst.context(Some(kind), None, "surrogate improvement"));
            }
        }
    }
}

fn prop_refined_m_bound(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..settings.instances {
        t.instances += 1;
        let inst = Instance::dominated(rng, settings.max_support);
        let (d, g, beta) = (inst.p_d.masses(), inst.p_g.masses(), inst.beta);
        let m = d
            .iter()
            .zip(g)
            .filter(|(d, _)| **d > 0.0)
            .map(|(d, g)| (1.0 - beta) * g / d)
            .fold(0.0, f64::max);
        let star = solve_lambda_star(beta, &inst.p_d, &inst.p_g).expect("valid instance");
        let mix = mixture(g, star.target.masses(), beta);
        for kind in FDivergenceKind::ALL {
            let lhs = div(kind, &mix, d);
            if m <= 1.0 {
                // Any M > 1 works and the bound tends to 0 as λ* = 1.
                t.record(lhs, || inst.context(Some(kind), None, "M <= 1 but mixture differs"));
                continue;
            }
            let lambda = star.lambda;
            let rhs = kind.f0(lambda) + kind.f0(m) * (1.0 - lambda) / (m - 1.0);
            t.record(excess(lhs, rhs), || inst.context(Some(kind), None, "refined M bound"));
        }
    }
}

fn prop_lambda_one_equivalence(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for i in 0..settings.instances {
        t.instances += 1;
        let inst = if i % 2 == 0 {
            Instance::covered(rng, settings.max_support)
        } else {
            Instance::random(rng, settings.max_support)
        };
        let (d, g, beta) = (inst.p_d.masses(), inst.p_g.masses(), inst.beta);
        let condition = d.iter().zip(g).all(|(d, g)| (1.0 - beta) * g <= *d);
        let star = solve_lambda_star(beta, &inst.p_d, &inst.p_g).expect("valid instance");
        let is_one = (star.lambda - 1.0).abs() <= 1e-12;
        t.record(if is_one == condition { 0.0 } else { 1.0 }, || {
            inst.context(None, None, "lambda* = 1 disagrees with (1-b) p_g <= p_d")
        });
        let mix = mixture(g, star.target.masses(), beta);
        for kind in FDivergenceKind::ALL {
            let value = div(kind, &mix, d);
            let violation = if is_one {
                value
            } else if value > 0.0 {
                -value
            } else {
                1.0
            };
            t.record(violation, || inst.context(Some(kind), None, "lambda* = 1 vs zero divergence"));
        }
    }
}

fn prop_solver_cross_check(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..settings.instances {
        t.instances += 1;
        let inst = Instance::random(rng, settings.max_support);
        let (d, g, beta) = (inst.p_d.masses(), inst.p_g.masses(), inst.beta);
        let exact = solve_lambda_star(beta, &inst.p_d, &inst.p_g).expect("valid instance");
        let (p, h): (Vec<f64>, Vec<f64>) = d.iter().zip(g).filter(|(d, _)| **d > 0.0).map(|(d, g)| (*d, g / d)).unzip();
        let empirical = lambda_star_empirical(beta, &p, &h).expect("valid weights");
        t.record(gap(empirical.lambda, exact.lambda), || {
            inst.context(None, None, "empirical and exact lambda* differ")
        });

        // Free-form (β, p, h) instance with ties.
        let n = rng.random_range(1..=settings.max_support.max(2) * 4);
        let p = random_distribution(rng, n, 0.1).masses().to_vec();
        let mut h: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        if n > 2 && rng.random_bool(0.3) {
            h[1] = h[0];
        }
        let beta = if rng.random_bool(0.1) { 1.0 } else { rng.random_range(0.01..1.0) };
        let walk = lambda_star_empirical(beta, &p, &h).expect("valid weights");
        let bisect = lambda_star_empirical_bisection(beta, &p, &h).expect("valid weights");
        let ctx = || Counterexample {
            kind: None,
            beta: Some(beta),
            p_d: p.clone(),
            p_g: h.clone(),
            candidate: None,
            detail: "empirical lambda* check".into(),
        };
        t.record(gap(walk.lambda, bisect), ctx);
        let weights: f64 = p
            .iter()
            .zip(&h)
            .map(|(pi, hi)| pi / beta * (walk.lambda - (1.0 - beta) * hi).max(0.0))
            .sum();
        t.record(gap(weights, 1.0), ctx);
        let (mut below, mut above) = (f64::NEG_INFINITY, f64::INFINITY);
        for (pi, hi) in p.iter().zip(&h) {
            if *pi == 0.0 {
                continue;
            }
            let knot = (1.0 - beta) * hi;
            if knot < walk.lambda {
                below = below.max(knot);
            } else {
                above = above.min(knot);
            }
        }
        t.record(excess(walk.lambda, above), ctx);
        let active = p.iter().zip(&h).filter(|(pi, hi)| **pi > 0.0 && (1.0 - beta) * **hi < walk.lambda).count();
        t.record(if active == walk.active_count && below < walk.lambda { 0.0 } else { 1.0 }, ctx);
    }
}

fn prop_g_right_derivative(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    const STEP: f64 = 1e-4;
    for _ in 0..settings.instances {
        t.instances += 1;
        let inst = Instance::random(rng, settings.max_support);
        let (d, g, beta) = (inst.p_d.masses(), inst.p_g.masses(), inst.beta);
        let lambda = rng.random_range(0.0..1.5);
        let crosses_knot = d
            .iter()
            .zip(g)
            .filter(|(d, _)| **d > 0.0)
            .any(|(d, g)| {
                let knot = (1.0 - beta) * g / d;
                knot >= lambda && knot <= lambda + STEP
            });
        if crosses_knot {
            continue;
        }
        let g0 = g_lambda(lambda, beta, &inst.p_d, &inst.p_g).expect("valid");
        let g1 = g_lambda(lambda + STEP, beta, &inst.p_d, &inst.p_g).expect("valid");
        let slope = (g1 - g0) / STEP;
        let mass: f64 = d
            .iter()
            .zip(g)
            .filter(|(d, g)| lambda * **d >= (1.0 - beta) * **g)
            .map(|(d, _)| d)
            .sum();
        t.record(gap(slope, mass), || inst.context(None, None, &format!("slope at lambda {lambda}")));
    }
}

fn prop_lambda_relations(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    for _ in 0..settings.instances {
        t.instances += 1;
        let inst = Instance::feasible(rng, settings.max_support);
        let star = solve_lambda_star(inst.beta, &inst.p_d, &inst.p_g).expect("valid");
        let dagger = solve_lambda_dagger(inst.beta, &inst.p_d, &inst.p_g).expect("feasible");
        t.record(1.0 - dagger.lambda, || inst.context(None, None, "lambda-dagger < 1"));
        t.record(star.lambda - dagger.lambda, || inst.context(None, None, "lambda-dagger < lambda*"));
        t.record(1.0 - star.lambda * dagger.lambda, || inst.context(None, None, "lambda* lambda-dagger < 1"));
    }
}

fn upper_bound_up1(kind: FDivergenceKind, inst: &Instance, q: &[f64], r: &OptimalTargetResult) -> f64 {
    let (d, g, beta) = (inst.p_d.masses(), inst.p_g.masses(), inst.beta);
    let first = div(kind, q, r.target.masses());
    let second = div(kind, g, &residual(d, r.target.masses(), beta));
    let first = if first == 0.0 { 0.0 } else { beta * first };
    let second = if second == 0.0 { 0.0 } else { (1.0 - beta) * second };
    first + second
}

fn upper_bound_up2(kind: FDivergenceKind, inst: &Instance, q: &[f64], r: &OptimalTargetResult) -> f64 {
    let (d, g, beta) = (inst.p_d.masses(), inst.p_g.masses(), inst.beta);
    let first = root(beta * div(kind, q, r.target.masses()));
    let second = root(div(kind, &mixture(g, r.target.masses(), beta), d));
    (first + second).powi(2)
}

fn prop_upper_bounds(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    let candidates = (settings.candidates / 100).max(10);
    for _ in 0..settings.instances {
        t.instances += 1;
        let inst = Instance::feasible(rng, settings.max_support);
        let (d, g, beta) = (inst.p_d.masses(), inst.p_g.masses(), inst.beta);
        let star = solve_lambda_star(beta, &inst.p_d, &inst.p_g).expect("valid");
        let dagger = solve_lambda_dagger(beta, &inst.p_d, &inst.p_g).expect("feasible");
        for c in 0..candidates {
            let q = match c {
                0 => star.target.masses().to_vec(),
                1 => dagger.target.masses().to_vec(),
                _ => random_candidate(rng, d.len()),
            };
            let mix = mixture(g, &q, beta);
            for kind in FDivergenceKind::ALL {
                let lhs = div(kind, &mix, d);
                let up1 = upper_bound_up1(kind, &inst, &q, &dagger);
                t.record(excess(lhs, up1), || inst.context(Some(kind), Some(&q), "first upper bound, R = Q-dagger"));
                if kind.is_hilbertian() {
                    let up2 = upper_bound_up2(kind, &inst, &q, &star);
                    t.record(excess(lhs, up2), || inst.context(Some(kind), Some(&q), "second upper bound, R = Q*"));
                }
            }
        }
    }
}

fn prop_weak_to_strong(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    const SHIFTS: [f64; 6] = [0.0, 1e-3, 1e-2, 5e-2, 0.2, 0.5];
    let directions = (settings.candidates / 500).max(4);
    for _ in 0..settings.instances {
        t.instances += 1;
        let inst = Instance::feasible(rng, settings.max_support);
        let (d, g, beta) = (inst.p_d.masses(), inst.p_g.masses(), inst.beta);
        let star = solve_lambda_star(beta, &inst.p_d, &inst.p_g).expect("valid");
        let dagger = solve_lambda_dagger(beta, &inst.p_d, &inst.p_g).expect("feasible");
        for _ in 0..directions {
            let direction = random_candidate(rng, d.len());
            for shift in SHIFTS {
                for kind in FDivergenceKind::ALL {
                    let base = div(kind, g, d);
                    if !(base.is_finite() && base > 0.0) {
                        continue;
                    }
                    let q = mixture(dagger.target.masses(), &direction, shift);
                    let gamma = div(kind, &q, dagger.target.masses()) / base;
                    if gamma <= 1.0 {
                        let lhs = div(kind, &mixture(g, &q, beta), d);
                        let rhs = (1.0 - beta * (1.0 - gamma)) * base;
                        t.record(excess(lhs, rhs), || {
                            inst.context(Some(kind), Some(&q), "contraction (1 - b(1 - gamma))")
                        });
                    }
                    if kind.is_hilbertian() {
                        let q = mixture(star.target.masses(), &direction, shift);
                        let gamma = div(kind, &q, star.target.masses()) / base;
                        if gamma <= 1.0 {
                            let lhs = div(kind, &mixture(g, &q, beta), d);
                            let rhs = (root(gamma * beta) + (1.0 - beta).sqrt()).powi(2) * base;
                            t.record(excess(lhs, rhs), || {
                                inst.context(Some(kind), Some(&q), "Hilbertian contraction")
                            });
                        }
                    }
                }
            }
        }
    }
}

fn prop_greedy_rate(rng: &mut ChaCha8Rng, settings: &VerifySettings, t: &mut Tracker) {
    const BETAS: [f64; 3] = [0.1, 0.3, 0.5];
    for i in 0..settings.instances {
        t.instances += 1;
        let mut inst = Instance::random(rng, settings.max_support);
        inst.beta = BETAS[i % BETAS.len()];
        for kind in FDivergenceKind::ALL {
            let trace =
                greedy_optimal_iteration(&inst.p_d, &inst.p_g, inst.beta, GREEDY_STEPS, kind).expect("valid instance");
            let first = trace.steps[0].divergence;
            let mut previous = first;
            for step in &trace.steps {
                let rate = (1.0 - inst.beta).powi(step.t as i32 - 1);
                let bound = if first.is_infinite() { first } else { rate * first };
                t.record(excess(step.divergence, bound), || {
                    inst.context(Some(kind), None, &format!("rate violated at step {}", step.t))
                });
                t.record(excess(step.divergence, previous), || {
                    inst.context(Some(kind), None, &format!("divergence increased at step {}", step.t))
                });
                previous = step.divergence;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_instances() {
        assert!(run_verification(0, 0, 8).is_err());
        assert!(run_verification(0, 5, 1).is_err());
    }

    #[test]
    fn small_run_passes_and_is_deterministic() {
        let settings = VerifySettings {
            seed: 3,
            instances: 10,
            max_support: 8,
            candidates: 200,
        };
        let a = run_verification_with(&settings).unwrap();
        let b = run_verification_with(&settings).unwrap();
        for p in &a.properties {
            assert!(p.passed, "{} failed: {:?}", p.id, p.counterexample);
        }
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(a.properties.len() >= 14);
    }

    #[test]
    fn random_distributions_hit_zero_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let zeros: usize = (0..200)
            .map(|_| random_distribution(&mut rng, 16, ZERO_ATOM_PROBABILITY))
            .map(|d| d.masses().iter().filter(|&&m| m == 0.0).count())
            .sum();
        let rate = zeros as f64 / (200.0 * 16.0);
        assert!(rate > 0.2 && rate < 0.3, "zero rate {rate}");
    }
}
