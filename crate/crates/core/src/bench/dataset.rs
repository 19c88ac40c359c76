use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{Gaussian, Generator, GeneratorMixture, Point, WeakGenerator};

/// Rejection attempts allowed when placing mode centers.
pub const MAX_CENTER_ATTEMPTS: usize = 10_000;

/// Isotropic Gaussian mixture in the plane with well separated modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyDatasetSpec {
    pub mode_count: usize,
    /// Centers are drawn uniformly from `[-w, w]²`.
    pub square_half_width: f64,
    /// Per-mode standard deviation is `base_sigma / sqrt(mode_count)`.
    pub base_sigma: f64,
    /// Minimum center distance in units of σ.
    pub min_separation: f64,
    pub dataset_seed: u64,
    pub train_size: usize,
    pub test_size: usize,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        Self {
            mode_count: 5,
            square_half_width: 10.0,
            base_sigma: 2.5,
            min_separation: 6.0,
            dataset_seed: 0,
            train_size: 64_000,
            test_size: 10_000,
        }
    }
}

impl ToyDatasetSpec {
    pub fn with_modes(mode_count: usize) -> Self {
        Self {
            mode_count,
            ..Self::default()
        }
    }

    pub fn sigma(&self) -> f64 {
        self.base_sigma / (self.mode_count as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode_count == 0 {
            return Err(Error::Config("mode_count must be at least 1".into()));
        }
        if !(self.square_half_width > 0.0 && self.base_sigma > 0.0 && self.min_separation >= 0.0) {
            return Err(Error::Config("square_half_width and base_sigma must be positive".into()));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::Config("train_size and test_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataset {
    pub centers: Vec<Point>,
    pub sigma: f64,
    pub train: Vec<Point>,
    pub test: Vec<Point>,
    /// The data-generating mixture.
    pub truth: GeneratorMixture,
}

impl ToyDataset {
    pub fn true_log_density(&self, x: &[f64]) -> f64 {
        self.truth.log_density(x)
    }

    /// Index of the nearest center.
    pub fn nearest_mode(&self, x: &[f64]) -> usize {
        nearest(&self.centers, x)
    }
}

pub(crate) fn nearest(centers: &[Point], x: &[f64]) -> usize {
    let dist = |c: &Point| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..centers.len())
        .min_by(|&a, &b| dist(&centers[a]).total_cmp(&dist(&centers[b])))
        .expect("at least one center")
}

fn place_centers<R: Rng + ?Sized>(spec: &ToyDatasetSpec, rng: &mut R) -> Result<Vec<Point>> {
    let w = spec.square_half_width;
    let min_dist = spec.min_separation * spec.sigma();
    let mut centers: Vec<Point> = Vec::with_capacity(spec.mode_count);
    let mut attempts = 0;
    while centers.len() < spec.mode_count {
        if attempts >= MAX_CENTER_ATTEMPTS {
            return Err(Error::Config(format!(
                "could not place {} centers {min_dist:.3} apart in a square of half-width {w} after {MAX_CENTER_ATTEMPTS} attempts; use a larger square",
                spec.mode_count
            )));
        }
        attempts += 1;
        let c = vec![rng.random_range(-w..=w), rng.random_range(-w..=w)];
        let far = centers
            .iter()
            .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= min_dist);
        if far {
            centers.push(c);
        }
    }
    Ok(centers)
}

/// Draws centers, train and test points; everything is a function of `dataset_seed`.
pub fn generate_toy_dataset(spec: &ToyDatasetSpec) -> Result<ToyDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.dataset_seed);
    let centers = place_centers(spec, &mut rng)?;
    let sigma = spec.sigma();
    let components = centers
        .iter()
        .map(|c| Gaussian::isotropic(c, sigma).map(WeakGenerator::Gaussian))
        .collect::<Result<Vec<_>>>()?;
    let truth = GeneratorMixture::uniform(components)?;
    let train = truth.sample(spec.train_size, &mut rng);
    let test = truth.sample(spec.test_size, &mut rng);
    Ok(ToyDataset {
        centers,
        sigma,
        train,
        test,
        truth,
    })
}
