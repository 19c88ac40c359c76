use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{generate_toy_dataset, ToyDataset, ToyDatasetSpec};
use crate::adagan::{
    run_adagan, run_baseline_trace, AdaganConfig, Baseline, BetaSchedule, OracleCache, TrainingContext,
};
use crate::error::{Error, Result};
use crate::generators::{DiscriminatorMode, Generator, GeneratorMixture, Point, WeakLearner};
use crate::metrics::{coverage_from_values, kde_fit_default, log_likelihood_from_values, MIN_COVERAGE_MODEL_SAMPLES};

pub const FULL_REPEATS: usize = 35;
pub const DESK_REPEATS: usize = 15;
pub const DESK_TRAIN_SIZE: usize = 8000;
/// Stream reserved for fitting the shared data density.
const ORACLE_STREAM: u64 = u64::MAX;

/// An algorithm to benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Algorithm {
    Vanilla,
    BestOfT { t: usize },
    Ensemble { t: usize },
    TopKLast { r: f64, t: usize },
    TopK { r: f64, t: usize },
    Adagan { t: usize, schedule: BetaSchedule },
}

impl Algorithm {
    pub fn rounds(&self) -> usize {
        match *self {
            Self::Vanilla => 1,
            Self::BestOfT { t }
            | Self::Ensemble { t }
            | Self::TopKLast { t, .. }
            | Self::TopK { t, .. }
            | Self::Adagan { t, .. } => t,
        }
    }

    pub fn default_name(&self) -> String {
        match *self {
            Self::Vanilla => "vanilla".into(),
            Self::BestOfT { t } => format!("best_of_{t}"),
            Self::Ensemble { t } => format!("ensemble_{t}"),
            Self::TopKLast { r, t } => format!("topk_last_{r}_{t}"),
            Self::TopK { r, t } => format!("topk_{r}_{t}"),
            Self::Adagan { t, schedule } => {
                let s = match schedule {
                    BetaSchedule::Constant { beta } => format!("beta_{beta}"),
                    BetaSchedule::OneOverT => "one_over_t".into(),
                    BetaSchedule::TopRatioConstant { r } => format!("top_ratio_{r}"),
                    BetaSchedule::TopRatioDecay { c1, c2 } => format!("top_ratio_decay_{c1}_{c2}"),
                    BetaSchedule::RatioFromThreshold { tau } => format!("threshold_{tau}"),
                };
                format!("adagan_{s}_{t}")
            }
        }
    }

    fn uses_discriminator(&self) -> bool {
        match *self {
            Self::TopKLast { t, .. } | Self::TopK { t, .. } | Self::Adagan { t, .. } => t > 1,
            _ => false,
        }
    }

    fn baseline(&self) -> Option<Baseline> {
        match *self {
            Self::Vanilla => Some(Baseline::Vanilla),
            Self::BestOfT { t } => Some(Baseline::BestOfT { t }),
            Self::Ensemble { t } => Some(Baseline::Ensemble { t }),
            Self::TopKLast { r, t } => Some(Baseline::TopKLast { r, t }),
            Self::TopK { r, t } => Some(Baseline::TopK { r, t }),
            Self::Adagan { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub algorithm: Algorithm,
}

impl AlgorithmSpec {
    pub fn new(algorithm: Algorithm) -> Self {
        Self { name: None, algorithm }
    }

    pub fn named(name: &str, algorithm: Algorithm) -> Self {
        Self {
            name: Some(name.to_string()),
            algorithm,
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.algorithm.default_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Coverage,
    Likelihood,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::Coverage => "coverage",
            Self::Likelihood => "likelihood",
        }
    }
}

/// Density used to rank points for the coverage metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageDensity {
    /// The mixture's own density.
    #[default]
    Analytic,
    /// A KDE fitted to model samples, as one would for an implicit generator.
    Kde,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

fn default_repeats() -> usize {
    FULL_REPEATS
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Coverage, Metric::Likelihood]
}

fn default_model_samples() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: ToyDatasetSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub learner: WeakLearner,
    #[serde(default)]
    pub discriminator: DiscriminatorMode,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// Model samples drawn per evaluation for the coverage threshold.
    #[serde(default = "default_model_samples")]
    pub model_samples: usize,
    #[serde(default)]
    pub coverage_density: CoverageDensity,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn new(dataset: ToyDatasetSpec, algorithms: Vec<AlgorithmSpec>) -> Self {
        Self {
            dataset,
            algorithms,
            learner: WeakLearner::default(),
            discriminator: DiscriminatorMode::default(),
            repeats: FULL_REPEATS,
            master_seed: 0,
            metrics: default_metrics(),
            model_samples: default_model_samples(),
            coverage_density: CoverageDensity::default(),
            output: OutputSpec::default(),
        }
    }

    /// Desk-scale comparison at `modes` modes: 8000 training points, 15 repeats.
    pub fn desk_scale(modes: usize, algorithms: Vec<AlgorithmSpec>) -> Self {
        let dataset = ToyDatasetSpec {
            train_size: DESK_TRAIN_SIZE,
            ..ToyDatasetSpec::with_modes(modes)
        };
        Self {
            repeats: DESK_REPEATS,
            ..Self::new(dataset, algorithms)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("at least one metric is required".into()));
        }
        if self.model_samples < MIN_COVERAGE_MODEL_SAMPLES {
            return Err(Error::Config(format!("model_samples must be at least {MIN_COVERAGE_MODEL_SAMPLES}")));
        }
        let mut labels = std::collections::BTreeSet::new();
        for spec in &self.algorithms {
            let label = spec.label();
            if label.is_empty() || label.contains([',', '\n', '\r', '"']) {
                return Err(Error::Config(format!("algorithm name {label:?} must be nonempty without commas or quotes")));
            }
            if !labels.insert(label.clone()) {
                return Err(Error::Config(format!("duplicate algorithm name {label:?}")));
            }
            if spec.algorithm.rounds() == 0 {
                return Err(Error::Config(format!("{label}: T must be at least 1")));
            }
            match spec.algorithm {
                Algorithm::Adagan { schedule, .. } => schedule.validate()?,
                Algorithm::TopK { r, .. } | Algorithm::TopKLast { r, .. } if !(r > 0.0 && r <= 1.0) => {
                    return Err(Error::Config(format!("{label}: r must be in (0, 1]")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid experiment config: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

/// Aggregated metric for one algorithm after `t` rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: String,
    pub modes: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub metric: Metric,
    /// `None` when every repeat failed.
    pub median: Option<f64>,
    pub p5: Option<f64>,
    pub p95: Option<f64>,
    /// Successful repeats.
    pub repeats: usize,
    pub failed: usize,
    /// Repeats in which a degenerate-weight fallback or an unreachable ratio was flagged.
    pub flagged: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub master_seed: u64,
    pub modes: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub repeats: usize,
    pub rows: Vec<ReportRow>,
    /// First error message per failed repeat, in repeat order.
    pub failures: Vec<String>,
}

impl ExperimentReport {
    pub fn row(&self, algorithm: &str, t: usize, metric: Metric) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm && r.t == t && r.metric == metric)
    }

    /// Row for the final round of `algorithm`.
    pub fn final_row(&self, algorithm: &str, metric: Metric) -> Option<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.algorithm == algorithm && r.metric == metric)
            .max_by_key(|r| r.t)
    }
}

/// Linear-interpolation percentile of sorted values, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

struct RepeatOutcome {
    /// `values[t-1][metric index]`.
    values: Vec<Vec<f64>>,
    flagged: bool,
}

fn repeat_rng(master_seed: u64, algorithm: usize, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((algorithm as u64 + 1) << 32) | repeat as u64);
    rng
}

fn train_models<R: Rng + ?Sized>(
    data: &[Point],
    algorithm: Algorithm,
    ctx: &mut TrainingContext,
    rng: &mut R,
) -> Result<(Vec<GeneratorMixture>, bool)> {
    match algorithm {
        Algorithm::Adagan { t, schedule } => {
            let config = AdaganConfig {
                iterations: t,
                schedule,
            };
            let run = run_adagan(data, &config, ctx, rng)?;
            let flagged = run.iterations.iter().any(|r| r.fallback || r.beta_flagged);
            Ok((run.prefixes()?, flagged))
        }
        other => {
            let baseline = other.baseline().expect("non-boosting algorithm");
            Ok((run_baseline_trace(data, baseline, ctx, rng)?.models, false))
        }
    }
}

fn evaluate<R: Rng + ?Sized>(
    model: &GeneratorMixture,
    test: &[Point],
    config: &ExperimentConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let log_at_test: Vec<f64> = test.iter().map(|x| model.log_density(x)).collect();
    let mut out = Vec::with_capacity(config.metrics.len());
    for metric in &config.metrics {
        let value = match metric {
            Metric::Coverage => match config.coverage_density {
                CoverageDensity::Analytic => {
                    let samples = model.sample(config.model_samples, rng);
                    let at_model: Vec<f64> = samples.iter().map(|x| model.log_density(x)).collect();
                    coverage_from_values(&at_model, &log_at_test)?
                }
                CoverageDensity::Kde => {
                    let anchors = model.sample(config.model_samples, rng);
                    let kde = kde_fit_default(&anchors, rng)?;
                    let samples = model.sample(config.model_samples, rng);
                    coverage_from_values(&kde.log_density_many(&samples), &kde.log_density_many(test))?
                }
            },
            Metric::Likelihood => log_likelihood_from_values(&log_at_test)?,
        };
        out.push(value);
    }
    Ok(out)
}

fn run_repeat(
    dataset: &ToyDataset,
    config: &ExperimentConfig,
    algorithm_index: usize,
    repeat: usize,
    oracle: Option<&OracleCache>,
) -> Result<RepeatOutcome> {
    let spec = &config.algorithms[algorithm_index];
    let mut rng = repeat_rng(config.master_seed, algorithm_index, repeat);
    let mut ctx = TrainingContext {
        learner: config.learner.clone(),
        discriminator: config.discriminator,
        oracle: oracle.cloned(),
    };
    let (models, flagged) = train_models(&dataset.train, spec.algorithm, &mut ctx, &mut rng)?;
    let values = models
        .iter()
        .map(|m| evaluate(m, &dataset.test, config, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(RepeatOutcome { values, flagged })
}

/// Runs every algorithm `repeats` times on the toy dataset and aggregates the metrics per round.
///
/// Each repeat draws from its own stream keyed by (master seed, algorithm, repeat),
/// so the report does not depend on how the repeats are scheduled.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let dataset = generate_toy_dataset(&config.dataset)?;
    let oracle = if config.discriminator == DiscriminatorMode::Oracle
        && config.algorithms.iter().any(|a| a.algorithm.uses_discriminator())
    {
        let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
        rng.set_stream(ORACLE_STREAM);
        Some(OracleCache::fit(&dataset.train, &mut rng)?)
    } else {
        None
    };

    let jobs: Vec<(usize, usize)> = (0..config.algorithms.len())
        .flat_map(|a| (0..config.repeats).map(move |r| (a, r)))
        .collect();
    let outcomes: Vec<Result<RepeatOutcome>> = jobs
        .par_iter()
        .map(|&(a, r)| run_repeat(&dataset, config, a, r, oracle.as_ref()))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (a, spec) in config.algorithms.iter().enumerate() {
        let label = spec.label();
        let mine: Vec<&Result<RepeatOutcome>> = outcomes[a * config.repeats..(a + 1) * config.repeats].iter().collect();
        let failed = mine.iter().filter(|o| o.is_err()).count();
        let flagged = mine.iter().filter(|o| matches!(o, Ok(x) if x.flagged)).count();
        for (r, outcome) in mine.iter().enumerate() {
            if let Err(e) = outcome {
                failures.push(format!("{label} repeat {r}: {e}"));
            }
        }
        for t in 1..=spec.algorithm.rounds() {
            for (m, metric) in config.metrics.iter().enumerate() {
                let values: Vec<f64> = mine
                    .iter()
                    .filter_map(|o| o.as_ref().ok())
                    .map(|o| o.values[t - 1][m])
                    .collect();
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                rows.push(ReportRow {
                    algorithm: label.clone(),
                    modes: config.dataset.mode_count,
                    t,
                    metric: *metric,
                    median: percentile(&sorted, 0.5),
                    p5: percentile(&sorted, 0.05),
                    p95: percentile(&sorted, 0.95),
                    repeats: values.len(),
                    failed,
                    flagged,
                    values,
                });
            }
        }
    }
    Ok(ExperimentReport {
        master_seed: config.master_seed,
        modes: config.dataset.mode_count,
        train_size: config.dataset.train_size,
        test_size: config.dataset.test_size,
        repeats: config.repeats,
        rows,
        failures,
    })
}
