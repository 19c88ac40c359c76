//! Weak learners with analytic densities, the additive mixture model and discriminators.

mod discriminator;
mod em;
mod gaussian;
mod mixture;
mod mode_seeking;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use discriminator::{
    fit_discriminator, oracle_probability, Discriminator, DiscriminatorMode, FittedDiscriminator,
    LogisticDiscriminator, OracleDiscriminator,
};
pub use em::{fit_gaussian_mixture_em, EmFit, GaussianMixture};
pub use gaussian::{fit_gaussian, fit_gaussian_with, resample, FitStrategy, Gaussian, GaussianParams, COVARIANCE_RIDGE};
pub use mixture::GeneratorMixture;
pub use mode_seeking::{fit_mode_seeking, ModeSeekingConfig};

use crate::error::{Error, Result};

pub type Point = Vec<f64>;

/// Numerically stable `log Σ exp(v_i)`; `-∞` for an empty or all `-∞` input.
pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Points with normalized nonnegative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("sample must contain at least one point".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: weights.len(),
            });
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::Validation("points must have at least one coordinate".into()));
        }
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("points must be finite".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Validation("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    /// Normalizes nonnegative raw weights.
    pub fn from_weights(points: Vec<Point>, raw: &[f64]) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Validation("weights must have a positive finite sum".into()));
        }
        Self::new(points, raw.iter().map(|w| w / total).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn positive_count(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }
}

/// A distribution that can be sampled and whose log-density is known.
pub trait Generator {
    fn dim(&self) -> usize;

    /// Log-density at `x`; `-∞` where the density vanishes.
    fn log_density(&self, x: &[f64]) -> f64;

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Point;

    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// Output of a weak learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeakGenerator {
    Gaussian(Gaussian),
    GaussianMixture(GaussianMixture),
}

impl Generator for WeakGenerator {
    fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::GaussianMixture(g) => g.dim(),
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            Self::Gaussian(g) => g.log_density(x),
            Self::GaussianMixture(g) => g.log_density(x),
        }
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            Self::Gaussian(g) => g.sample_one(rng),
            Self::GaussianMixture(g) => g.sample_one(rng),
        }
    }
}

/// Weak-learner configuration: fit on a weighted sample, return a generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeakLearner {
    /// Weighted maximum-likelihood Gaussian.
    Gaussian {
        #[serde(default)]
        strategy: FitStrategy,
    },
    /// Weighted EM Gaussian mixture.
    GaussianMixture {
        k: usize,
        #[serde(default = "default_restarts")]
        restarts: usize,
        #[serde(default)]
        strategy: FitStrategy,
    },
    /// A single Gaussian that collapses onto one mode (see [`fit_mode_seeking`]).
    ModeSeeking(#[serde(default)] ModeSeekingConfig),
}

fn default_restarts() -> usize {
    3
}

impl Default for WeakLearner {
    fn default() -> Self {
        Self::ModeSeeking(ModeSeekingConfig::default())
    }
}

impl WeakLearner {
    /// Minimum number of positive-weight points a fit needs in dimension `d`.
    pub fn min_fit_size(&self, d: usize) -> usize {
        match self {
            Self::GaussianMixture { k, .. } => (*k).max(d + 1),
            _ => d + 1,
        }
    }

    pub fn fit<R: Rng + ?Sized>(&self, sample: &WeightedSample, rng: &mut R) -> Result<WeakGenerator> {
        match self {
            Self::Gaussian { strategy } => Ok(WeakGenerator::Gaussian(fit_gaussian_with(sample, *strategy, rng)?)),
            Self::GaussianMixture { k, restarts, strategy } => {
                let resampled;
                let sample = match strategy {
                    FitStrategy::Weighted => sample,
                    FitStrategy::Resample => {
                        resampled = resample(sample, rng)?;
                        &resampled
                    }
                };
                let fit = fit_gaussian_mixture_em(sample, *k, *restarts, rng)?;
                Ok(WeakGenerator::GaussianMixture(fit.mixture))
            }
            Self::ModeSeeking(config) => Ok(WeakGenerator::Gaussian(fit_mode_seeking(sample, config, rng)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weighted_sample_validation() {
        assert!(WeightedSample::new(vec![], vec![]).is_err());
        assert!(WeightedSample::new(vec![vec![0.0]], vec![0.5]).is_err());
        assert!(WeightedSample::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).is_err());
        assert!(WeightedSample::new(vec![vec![0.0], vec![1.0]], vec![1.5, -0.5]).is_err());
        let s = WeightedSample::from_weights(vec![vec![0.0], vec![1.0]], &[3.0, 1.0]).unwrap();
        assert_eq!(s.weights(), &[0.75, 0.25]);
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp([f64::NEG_INFINITY, f64::NEG_INFINITY].into_iter()), f64::NEG_INFINITY);
        assert!((log_sum_exp([1000.0, 1000.0].into_iter()) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn learner_config_parses() {
        let l: WeakLearner = serde_json::from_str(r#"{"type":"mode_seeking"}"#).unwrap();
        assert_eq!(l, WeakLearner::default());
        let l: WeakLearner = serde_json::from_str(r#"{"type":"gaussian_mixture","k":2}"#).unwrap();
        assert_eq!(l.min_fit_size(2), 3);
        assert!(serde_json::from_str::<WeakLearner>(r#"{"type":"vae"}"#).is_err());
    }

    #[test]
    fn generators_integrate_to_one() {
        // importance sampling from a wide Gaussian proposal
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let proposal = Gaussian::isotropic(&[0.0, 0.0], 4.0).unwrap();
        let target = WeakGenerator::GaussianMixture(
            GaussianMixture::new(
                vec![Gaussian::isotropic(&[-2.0, 1.0], 1.0).unwrap(), Gaussian::isotropic(&[3.0, 0.0], 0.7).unwrap()],
                vec![0.3, 0.7],
            )
            .unwrap(),
        );
        let n = 100_000;
        let estimate = proposal
            .sample(n, &mut rng)
            .iter()
            .map(|x| (target.log_density(x) - proposal.log_density(x)).exp())
            .sum::<f64>()
            / n as f64;
        assert!((estimate - 1.0).abs() < 0.02, "{estimate}");
    }
}
