//! The boosting loop: β schedules, example reweighting and baselines.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete_theory::lambda_star_empirical;
use crate::divergence::density_ratio_from_discriminator;
use crate::error::{check_unit_interval, Error, Result};
use crate::generators::{
    oracle_probability, Discriminator, DiscriminatorMode, Generator, GeneratorMixture, LogisticDiscriminator, Point,
    WeakGenerator, WeakLearner, WeightedSample,
};
use crate::metrics::{coverage_c, kde_fit_default, KdeModel};

/// Search tolerance on β in [`choose_beta_for_ratio`].
pub const BETA_TOLERANCE: f64 = 1e-9;
/// Smallest β probed by the ratio search.
const BETA_FLOOR: f64 = 1e-12;
/// Fraction of the training set held out by [`Baseline::BestOfT`].
pub const VALIDATION_FRACTION: f64 = 0.2;
/// Model samples drawn to score a candidate on the validation split.
pub const VALIDATION_MODEL_SAMPLES: usize = 2000;
/// Fallback training-set size floor when too few weights are positive.
pub const FALLBACK_MIN_EXAMPLES: usize = 10;

/// How the mixture weight `β_t` of each new component is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BetaSchedule {
    Constant { beta: f64 },
    /// `β_t = 1/t`, giving uniform alphas.
    OneOverT,
    /// β such that a fraction `r` of the examples keeps positive weight.
    TopRatioConstant { r: f64 },
    /// As `TopRatioConstant` with `r_t = c1 · exp(-c2 · t)`.
    TopRatioDecay { c1: f64, c2: f64 },
    /// β such that exactly the examples with density ratio below `tau` keep positive weight.
    RatioFromThreshold { tau: f64 },
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { beta } => check_unit_interval("beta", beta),
            Self::OneOverT => Ok(()),
            Self::TopRatioConstant { r } if r > 0.0 && r < 1.0 => Ok(()),
            Self::TopRatioConstant { r } => Err(Error::Domain {
                name: "r",
                value: r,
                domain: "(0, 1)",
            }),
            Self::TopRatioDecay { c1, c2 } if c1 > 0.0 && c2 > 0.0 => Ok(()),
            Self::TopRatioDecay { .. } => Err(Error::Config("top_ratio_decay needs c1 > 0 and c2 > 0".into())),
            Self::RatioFromThreshold { tau } if tau > 0.0 => Ok(()),
            Self::RatioFromThreshold { tau } => Err(Error::Domain {
                name: "tau",
                value: tau,
                domain: "(0, inf)",
            }),
        }
    }

    /// `β_t` for iteration `t ≥ 2` given discriminator values on the training set.
    pub fn beta(&self, t: usize, d_values: &[f64], p: &[f64]) -> Result<BetaChoice> {
        self.validate()?;
        let fixed = |beta| BetaChoice {
            beta,
            positive: None,
            flagged: false,
        };
        match *self {
            Self::Constant { beta } => Ok(fixed(beta)),
            Self::OneOverT => Ok(fixed(1.0 / t as f64)),
            Self::TopRatioConstant { r } => choose_beta_for_ratio(r, d_values, p),
            Self::TopRatioDecay { c1, c2 } => {
                let r = (c1 * (-c2 * t as f64).exp()).clamp(f64::MIN_POSITIVE, 1.0);
                choose_beta_for_ratio(r, d_values, p)
            }
            Self::RatioFromThreshold { tau } => {
                let below = d_values
                    .iter()
                    .zip(p)
                    .filter(|(d, p)| **p > 0.0 && density_ratio_from_discriminator(**d) < tau)
                    .count();
                choose_beta_for_count(below.max(1), d_values, p)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaChoice {
    pub beta: f64,
    /// Positive-weight count at `beta`, for ratio-driven schedules.
    pub positive: Option<usize>,
    /// The requested count was unreachable and the nearest one was used.
    pub flagged: bool,
}

fn check_discriminator_values(d_values: &[f64], p: &[f64]) -> Result<()> {
    if d_values.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: d_values.len(),
        });
    }
    if let Some(bad) = d_values.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        return Err(Error::Domain {
            name: "discriminator value",
            value: *bad,
            domain: "(0, 1)",
        });
    }
    Ok(())
}

/// Example weights `w_i = (p_i/β)(λ* − (1−β) h(d_i))_+`, which sum to one.
pub fn update_training_weights(d_values: &[f64], p: &[f64], beta: f64) -> Result<Vec<f64>> {
    Ok(reweight_values(d_values, p, beta)?.0)
}

/// Weights together with `λ*`.
pub fn reweight_values(d_values: &[f64], p: &[f64], beta: f64) -> Result<(Vec<f64>, f64)> {
    check_discriminator_values(d_values, p)?;
    let h: Vec<f64> = d_values.iter().map(|d| density_ratio_from_discriminator(*d)).collect();
    let lambda = lambda_star_empirical(beta, p, &h)?.lambda;
    let weights = p
        .iter()
        .zip(&h)
        .map(|(pi, hi)| pi / beta * (lambda - (1.0 - beta) * hi).max(0.0))
        .collect();
    Ok((weights, lambda))
}

fn positive_count(beta: f64, p: &[f64], h: &[f64]) -> Result<usize> {
    Ok(lambda_star_empirical(beta, p, h)?.active_count)
}

/// β for which `⌈N r⌉` weights stay strictly positive (midpoint of the feasible interval).
pub fn choose_beta_for_ratio(r: f64, d_values: &[f64], p: &[f64]) -> Result<BetaChoice> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Domain {
            name: "r",
            value: r,
            domain: "(0, 1)",
        });
    }
    let k = ((p.len() as f64 * r).ceil() as usize).clamp(1, p.len().max(1));
    choose_beta_for_count(k, d_values, p)
}

fn choose_beta_for_count(k: usize, d_values: &[f64], p: &[f64]) -> Result<BetaChoice> {
    check_discriminator_values(d_values, p)?;
    let h: Vec<f64> = d_values.iter().map(|d| density_ratio_from_discriminator(*d)).collect();
    let count = |beta: f64| positive_count(beta, p, &h);

    // count(β) is nondecreasing in β
    let low_count = count(BETA_FLOOR)?;
    let high_count = count(1.0)?;
    let target = k.clamp(low_count, high_count);
    let (lo, hi) = feasible_interval(target, &count)?;
    if lo <= hi {
        let beta = 0.5 * (lo + hi);
        return Ok(BetaChoice {
            beta,
            positive: Some(count(beta)?),
            flagged: target != k,
        });
    }
    // the count jumps over `target` at `hi ≈ lo`: take the nearer neighbour
    let above = count(lo)?;
    let below = count(hi)?;
    let nearest = if target - below < above - target { below } else { above };
    let (lo, hi) = feasible_interval(nearest, &count)?;
    let beta = if lo <= hi { 0.5 * (lo + hi) } else { lo };
    Ok(BetaChoice {
        beta,
        positive: Some(count(beta)?),
        flagged: true,
    })
}

/// `(inf{β : count ≥ k}, sup{β : count ≤ k})` up to [`BETA_TOLERANCE`].
fn feasible_interval(k: usize, count: &impl Fn(f64) -> Result<usize>) -> Result<(f64, f64)> {
    let lower = if count(BETA_FLOOR)? >= k {
        BETA_FLOOR
    } else {
        let (mut a, mut b) = (BETA_FLOOR, 1.0);
        while b - a > BETA_TOLERANCE {
            let m = 0.5 * (a + b);
            if count(m)? >= k {
                b = m;
            } else {
                a = m;
            }
        }
        b
    };
    let upper = if count(1.0)? <= k {
        1.0
    } else {
        let (mut a, mut b) = (BETA_FLOOR, 1.0);
        while b - a > BETA_TOLERANCE {
            let m = 0.5 * (a + b);
            if count(m)? <= k {
                a = m;
            } else {
                b = m;
            }
        }
        a
    };
    Ok((lower, upper))
}

/// Data density shared by oracle discriminators: the KDE and its values at the training points.
#[derive(Clone, Debug)]
pub struct OracleCache {
    pub kde: Arc<KdeModel>,
    pub log_density_at_data: Arc<Vec<f64>>,
}

impl OracleCache {
    pub fn fit<R: Rng + ?Sized>(data: &[Point], rng: &mut R) -> Result<Self> {
        let kde = kde_fit_default(data, rng)?;
        let at_data = kde.log_density_many(data);
        Ok(Self {
            kde: Arc::new(kde),
            log_density_at_data: Arc::new(at_data),
        })
    }
}

/// Learner and discriminator shared by all training procedures.
#[derive(Clone, Debug, Default)]
pub struct TrainingContext {
    pub learner: WeakLearner,
    pub discriminator: DiscriminatorMode,
    /// Reused for oracle discriminators; fitted on demand when absent.
    pub oracle: Option<OracleCache>,
}

impl TrainingContext {
    pub fn new(learner: WeakLearner, discriminator: DiscriminatorMode) -> Self {
        Self {
            learner,
            discriminator,
            oracle: None,
        }
    }

    fn ensure_oracle<R: Rng + ?Sized>(&mut self, data: &[Point], rng: &mut R) -> Result<()> {
        if self.discriminator == DiscriminatorMode::Oracle {
            match &self.oracle {
                Some(cache) if cache.log_density_at_data.len() == data.len() => {}
                _ => self.oracle = Some(OracleCache::fit(data, rng)?),
            }
        }
        Ok(())
    }
}

/// Discriminator values at the training points against `model`.
pub fn discriminator_values<R: Rng + ?Sized>(
    data: &[Point],
    model: &GeneratorMixture,
    ctx: &mut TrainingContext,
    rng: &mut R,
) -> Result<DiscriminatorOutput> {
    ctx.ensure_oracle(data, rng)?;
    match ctx.discriminator {
        DiscriminatorMode::Oracle => {
            let cache = ctx.oracle.as_ref().expect("fitted above");
            let values = data
                .par_iter()
                .zip(cache.log_density_at_data.par_iter())
                .map(|(x, ld)| oracle_probability(*ld, model.log_density(x)))
                .collect();
            Ok(DiscriminatorOutput {
                values,
                converged: None,
            })
        }
        DiscriminatorMode::Classifier => {
            let samples = model.sample(data.len(), rng);
            let classifier = LogisticDiscriminator::fit(data, &samples)?;
            Ok(DiscriminatorOutput {
                values: classifier.predict_many(data),
                converged: Some(classifier.converged),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorOutput {
    pub values: Vec<f64>,
    /// Classifier convergence flag; `None` for the oracle.
    pub converged: Option<bool>,
}

/// One reweighting round against a fixed model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reweighting {
    pub beta: f64,
    pub lambda: f64,
    pub d_values: Vec<f64>,
    pub h_values: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Discriminator values and training weights (with `p_i = 1/N`) for one round.
pub fn reweight_against<R: Rng + ?Sized>(
    data: &[Point],
    model: &GeneratorMixture,
    beta: f64,
    ctx: &mut TrainingContext,
    rng: &mut R,
) -> Result<Reweighting> {
    let d_values = discriminator_values(data, model, ctx, rng)?.values;
    let p = vec![1.0 / data.len() as f64; data.len()];
    let (weights, lambda) = reweight_values(&d_values, &p, beta)?;
    Ok(Reweighting {
        beta,
        lambda,
        h_values: d_values.iter().map(|d| density_ratio_from_discriminator(*d)).collect(),
        d_values,
        weights,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaganConfig {
    /// Number of components `T`.
    pub iterations: usize,
    pub schedule: BetaSchedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub beta: f64,
    /// `λ*` of the reweighting; absent for the first, uniformly weighted fit.
    pub lambda: Option<f64>,
    pub min_weight: f64,
    pub max_weight: f64,
    pub zero_weights: usize,
    pub weight_sum: f64,
    /// Too few positive weights; the top examples were used uniformly instead.
    pub fallback: bool,
    /// The ratio schedule could not reach its target count.
    pub beta_flagged: bool,
    pub classifier_converged: Option<bool>,
    /// Mixture weights after this iteration.
    pub alphas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaganRun {
    pub mixture: GeneratorMixture,
    pub iterations: Vec<IterationRecord>,
}

impl AdaganRun {
    /// The mixture `G_t` after `t` iterations.
    pub fn mixture_at(&self, t: usize) -> Result<GeneratorMixture> {
        if t == 0 || t > self.iterations.len() {
            return Err(Error::Validation(format!("no iteration {t} in a run of {}", self.iterations.len())));
        }
        GeneratorMixture::from_parts(self.mixture.components()[..t].to_vec(), self.iterations[t - 1].alphas.clone())
    }

    pub fn prefixes(&self) -> Result<Vec<GeneratorMixture>> {
        (1..=self.iterations.len()).map(|t| self.mixture_at(t)).collect()
    }
}

/// A run that stopped early: the completed iterations and the error that stopped it.
#[derive(Debug)]
pub struct PartialRun {
    pub completed: Option<AdaganRun>,
    pub failed_iteration: usize,
    pub error: Error,
}

impl fmt::Display for PartialRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iteration {} failed: {}", self.failed_iteration, self.error)
    }
}

impl std::error::Error for PartialRun {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<PartialRun> for Error {
    fn from(p: PartialRun) -> Self {
        Error::Fit(p.to_string())
    }
}

fn weight_summary(weights: &[f64]) -> (f64, f64, usize, f64) {
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let zeros = weights.iter().filter(|w| **w == 0.0).count();
    (min, max, zeros, weights.iter().sum())
}

/// Uniform weights over the `m` heaviest examples (ties by index).
fn top_examples_uniform(weights: &[f64], m: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let m = m.min(weights.len());
    let mut out = vec![0.0; weights.len()];
    for &i in &order[..m] {
        out[i] = 1.0 / m as f64;
    }
    out
}

fn check_training_data(data: &[Point], iterations: usize) -> Result<()> {
    if iterations == 0 {
        return Err(Error::Config("number of iterations must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(Error::Validation("training data is empty".into()));
    }
    Ok(())
}

/// Boosting: each round reweights the data against the current mixture and adds a new component.
///
/// On failure the error carries the run completed so far.
#[allow(clippy::result_large_err)]
pub fn run_adagan<R: Rng + ?Sized>(
    data: &[Point],
    config: &AdaganConfig,
    ctx: &mut TrainingContext,
    rng: &mut R,
) -> std::result::Result<AdaganRun, PartialRun> {
    let fail = |completed, t, error| PartialRun {
        completed,
        failed_iteration: t,
        error,
    };
    if let Err(e) = check_training_data(data, config.iterations).and_then(|_| config.schedule.validate()) {
        return Err(fail(None, 0, e));
    }
    let n = data.len();
    let d = data[0].len();
    let p = vec![1.0 / n as f64; n];

    let first = WeightedSample::uniform(data.to_vec())
        .and_then(|s| ctx.learner.fit(&s, rng))
        .map_err(|e| fail(None, 1, e))?;
    let mut mixture = GeneratorMixture::single(first);
    let mut records = vec![IterationRecord {
        t: 1,
        beta: 1.0,
        lambda: None,
        min_weight: p[0],
        max_weight: p[0],
        zero_weights: 0,
        weight_sum: 1.0,
        fallback: false,
        beta_flagged: false,
        classifier_converged: None,
        alphas: vec![1.0],
    }];

    for t in 2..=config.iterations {
        let step = (|| -> Result<(WeakGenerator, IterationRecord)> {
            let disc = discriminator_values(data, &mixture, ctx, rng)?;
            let choice = config.schedule.beta(t, &disc.values, &p)?;
            let (mut weights, lambda) = reweight_values(&disc.values, &p, choice.beta)?;
            let (min_weight, max_weight, zero_weights, weight_sum) = weight_summary(&weights);
            let positive = n - zero_weights;
            let fallback = positive < ctx.learner.min_fit_size(d);
            if fallback {
                log::warn!("iteration {t}: only {positive} positive weights; using the top examples");
                weights = top_examples_uniform(&weights, (d + 1).max(FALLBACK_MIN_EXAMPLES));
            }
            let sample = WeightedSample::new(data.to_vec(), weights)?;
            let component = ctx.learner.fit(&sample, rng)?;
            Ok((
                component,
                IterationRecord {
                    t,
                    beta: choice.beta,
                    lambda: Some(lambda),
                    min_weight,
                    max_weight,
                    zero_weights,
                    weight_sum,
                    fallback,
                    beta_flagged: choice.flagged,
                    classifier_converged: disc.converged,
                    alphas: Vec::new(),
                },
            ))
        })();
        let (component, mut record) = match step {
            Ok(v) => v,
            Err(e) => {
                let completed = AdaganRun {
                    mixture,
                    iterations: records,
                };
                return Err(fail(Some(completed), t, e));
            }
        };
        if let Err(e) = mixture.add_component(component, record.beta) {
            let completed = AdaganRun {
                mixture,
                iterations: records,
            };
            return Err(fail(Some(completed), t, e));
        }
        record.alphas = mixture.alphas().to_vec();
        records.push(record);
    }
    Ok(AdaganRun {
        mixture,
        iterations: records,
    })
}

/// Non-boosted reference procedures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Baseline {
    /// One fit on uniform weights.
    Vanilla,
    /// The best of `t` independent fits by coverage on a validation split.
    BestOfT { t: usize },
    /// `t` independent fits with equal weights.
    Ensemble { t: usize },
    /// Each round fits on the top `r` fraction ranked by a discriminator against the previous component.
    TopKLast { r: f64, t: usize },
    /// Each round fits on the top `r` fraction ranked by a discriminator against the current mixture.
    TopK { r: f64, t: usize },
}

impl Baseline {
    pub fn rounds(&self) -> usize {
        match *self {
            Self::Vanilla => 1,
            Self::BestOfT { t } | Self::Ensemble { t } | Self::TopKLast { t, .. } | Self::TopK { t, .. } => t,
        }
    }
}

/// Models after each round of a baseline; `models[t-1]` uses `t` fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub models: Vec<GeneratorMixture>,
}

impl BaselineRun {
    pub fn mixture(&self) -> &GeneratorMixture {
        self.models.last().expect("at least one round")
    }
}

fn fit_uniform<R: Rng + ?Sized>(points: &[Point], learner: &WeakLearner, rng: &mut R) -> Result<WeakGenerator> {
    learner.fit(&WeightedSample::uniform(points.to_vec())?, rng)
}

/// Uniform weights on the `⌈r N⌉` examples with the largest discriminator output.
fn top_fraction_weights(d_values: &[f64], r: f64) -> Vec<f64> {
    let k = ((d_values.len() as f64 * r).ceil() as usize).clamp(1, d_values.len());
    top_examples_uniform(d_values, k)
}

pub fn run_baseline<R: Rng + ?Sized>(
    data: &[Point],
    variant: Baseline,
    ctx: &mut TrainingContext,
    rng: &mut R,
) -> Result<GeneratorMixture> {
    Ok(run_baseline_trace(data, variant, ctx, rng)?.mixture().clone())
}

pub fn run_baseline_trace<R: Rng + ?Sized>(
    data: &[Point],
    variant: Baseline,
    ctx: &mut TrainingContext,
    rng: &mut R,
) -> Result<BaselineRun> {
    check_training_data(data, variant.rounds())?;
    let learner = ctx.learner.clone();
    let models = match variant {
        Baseline::Vanilla => vec![GeneratorMixture::single(fit_uniform(data, &learner, rng)?)],
        Baseline::Ensemble { t } => {
            let mut fits = Vec::with_capacity(t);
            let mut models = Vec::with_capacity(t);
            for _ in 0..t {
                fits.push(fit_uniform(data, &learner, rng)?);
                models.push(GeneratorMixture::uniform(fits.clone())?);
            }
            models
        }
        Baseline::BestOfT { t } => {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(rng);
            let n_val = ((data.len() as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, data.len() - 1);
            let validation: Vec<Point> = order[..n_val].iter().map(|&i| data[i].clone()).collect();
            let train: Vec<Point> = order[n_val..].iter().map(|&i| data[i].clone()).collect();
            let mut best: Option<(f64, GeneratorMixture)> = None;
            let mut models = Vec::with_capacity(t);
            for _ in 0..t {
                let model = GeneratorMixture::single(fit_uniform(&train, &learner, rng)?);
                let samples = model.sample(VALIDATION_MODEL_SAMPLES, rng);
                let score = coverage_c(|x| model.log_density(x), &samples, &validation)?;
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, model));
                }
                models.push(best.as_ref().expect("set above").1.clone());
            }
            models
        }
        Baseline::TopKLast { r, t } | Baseline::TopK { r, t } => {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Domain {
                    name: "r",
                    value: r,
                    domain: "(0, 1]",
                });
            }
            let against_last = matches!(variant, Baseline::TopKLast { .. });
            let first = fit_uniform(data, &learner, rng)?;
            let mut last = first.clone();
            let mut mixture = GeneratorMixture::single(first);
            let mut models = vec![mixture.clone()];
            for round in 2..=t {
                let reference = if against_last {
                    GeneratorMixture::single(last.clone())
                } else {
                    mixture.clone()
                };
                let d_values = discriminator_values(data, &reference, ctx, rng)?.values;
                let sample = WeightedSample::new(data.to_vec(), top_fraction_weights(&d_values, r))?;
                let component = learner.fit(&sample, rng)?;
                mixture.add_component(component.clone(), 1.0 / round as f64)?;
                last = component;
                models.push(mixture.clone());
            }
            models
        }
    };
    Ok(BaselineRun { models })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::Gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FIXTURE_D: [f64; 4] = [0.8, 0.6, 0.5, 0.2];

    #[test]
    fn worked_weight_example() {
        let p = [0.25; 4];
        let w = update_training_weights(&FIXTURE_D, &p, 0.5).unwrap();
        let expected = [31.0 / 72.0, 47.0 / 144.0, 35.0 / 144.0, 0.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{w:?}");
        }
        assert_eq!(update_training_weights(&FIXTURE_D, &p, 1.0).unwrap(), p.to_vec());
        let w = update_training_weights(&[0.5; 4], &p, 0.3).unwrap();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
        assert!(update_training_weights(&[0.0, 1.0], &[0.5, 0.5], 0.5).is_err());
    }

    #[test]
    fn ratio_search_on_fixture() {
        let p = [0.25; 4];
        let c = choose_beta_for_ratio(0.75, &FIXTURE_D, &p).unwrap();
        assert_eq!(c.positive, Some(3));
        assert!(!c.flagged);
        // β = 0.5 gives three positive weights, so it lies in the feasible interval
        let (lo, hi) = feasible_interval(3, &|b| positive_count(b, &p, &[0.25, 2.0 / 3.0, 1.0, 4.0])).unwrap();
        assert!(lo <= 0.5 && 0.5 <= hi);

        let c = choose_beta_for_ratio(0.25, &FIXTURE_D, &p).unwrap();
        let w = update_training_weights(&FIXTURE_D, &p, c.beta).unwrap();
        assert!(w[0] > 0.0 && w[1..].iter().all(|x| *x == 0.0), "{w:?}");

        let c = choose_beta_for_ratio(1.0, &FIXTURE_D, &p).unwrap();
        let w = update_training_weights(&FIXTURE_D, &p, c.beta).unwrap();
        assert!(w.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn ties_are_flagged() {
        let d = [0.5, 0.5, 0.5, 0.2];
        let p = [0.25; 4];
        let c = choose_beta_for_ratio(0.5, &d, &p).unwrap();
        assert!(c.flagged);
        assert!(matches!(c.positive, Some(3) | Some(4)));
    }

    #[test]
    fn schedules() {
        let d = [0.5; 3];
        let p = [1.0 / 3.0; 3];
        assert_eq!(BetaSchedule::OneOverT.beta(2, &d, &p).unwrap().beta, 0.5);
        assert_eq!(BetaSchedule::OneOverT.beta(3, &d, &p).unwrap().beta, 1.0 / 3.0);
        assert_eq!(BetaSchedule::Constant { beta: 0.3 }.beta(7, &d, &p).unwrap().beta, 0.3);
        assert!(BetaSchedule::Constant { beta: 0.0 }.validate().is_err());
        assert!(BetaSchedule::TopRatioConstant { r: 1.0 }.validate().is_err());
        assert!(BetaSchedule::RatioFromThreshold { tau: 0.0 }.validate().is_err());
        let json = r#"{"type":"top_ratio_decay","c1":0.9,"c2":0.1}"#;
        let s: BetaSchedule = serde_json::from_str(json).unwrap();
        assert_eq!(s, BetaSchedule::TopRatioDecay { c1: 0.9, c2: 0.1 });
    }

    fn two_modes(rng: &mut ChaCha8Rng) -> Vec<Point> {
        let mut pts = Gaussian::isotropic(&[-6.0, 0.0], 1.0).unwrap().sample(400, rng);
        pts.extend(Gaussian::isotropic(&[6.0, 0.0], 1.0).unwrap().sample(400, rng));
        pts
    }

    #[test]
    fn one_over_t_gives_uniform_alphas() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = two_modes(&mut rng);
        let mut ctx = TrainingContext::default();
        let config = AdaganConfig {
            iterations: 5,
            schedule: BetaSchedule::OneOverT,
        };
        let run = run_adagan(&data, &config, &mut ctx, &mut rng).unwrap();
        assert!(run.mixture.alphas().iter().all(|a| (a - 0.2).abs() < 1e-12));
        for r in &run.iterations {
            assert!((r.weight_sum - 1.0).abs() < 1e-9);
            assert!(r.beta > 0.0 && r.beta <= 1.0);
        }
        assert_eq!(run.mixture_at(5).unwrap(), run.mixture);
        assert_eq!(run.mixture_at(1).unwrap().len(), 1);
    }

    #[test]
    fn single_iteration_is_vanilla() {
        let data = two_modes(&mut ChaCha8Rng::seed_from_u64(2));
        let mut ctx = TrainingContext::default();
        let config = AdaganConfig {
            iterations: 1,
            schedule: BetaSchedule::OneOverT,
        };
        let run = run_adagan(&data, &config, &mut ctx, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let vanilla = run_baseline(&data, Baseline::Vanilla, &mut ctx, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(run.mixture, vanilla);
    }

    #[test]
    fn degenerate_weights_fall_back() {
        let weights = [0.0, 0.7, 0.3, 0.0];
        assert_eq!(top_examples_uniform(&weights, 2), vec![0.0, 0.5, 0.5, 0.0]);
        assert_eq!(top_examples_uniform(&weights, 3), vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn baselines_have_expected_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = two_modes(&mut rng);
        let mut ctx = TrainingContext::new(WeakLearner::default(), DiscriminatorMode::Classifier);
        let ens = run_baseline_trace(&data, Baseline::Ensemble { t: 3 }, &mut ctx, &mut rng).unwrap();
        assert_eq!(ens.models.len(), 3);
        assert_eq!(ens.mixture().alphas(), &[1.0 / 3.0; 3]);
        let one = run_baseline(&data, Baseline::Ensemble { t: 1 }, &mut ctx, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let van = run_baseline(&data, Baseline::Vanilla, &mut ctx, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(one, van);
        for variant in [Baseline::TopK { r: 0.5, t: 3 }, Baseline::TopKLast { r: 0.5, t: 3 }, Baseline::BestOfT { t: 2 }]
        {
            let run = run_baseline_trace(&data, variant, &mut ctx, &mut rng).unwrap();
            assert_eq!(run.models.len(), variant.rounds());
        }
        assert!(run_baseline(&data, Baseline::TopK { r: 0.0, t: 2 }, &mut ctx, &mut rng).is_err());
        assert!(run_baseline(&[], Baseline::Vanilla, &mut ctx, &mut rng).is_err());
    }
}
