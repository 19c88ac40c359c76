use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Generator, Point, WeightedSample};
use crate::error::{Error, Result};

/// Relative ridge added to fitted covariances.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// How a learner consumes example weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStrategy {
    /// Weighted maximum likelihood.
    #[default]
    Weighted,
    /// Draw `N` points with replacement proportionally to the weights, then fit unweighted.
    Resample,
}

/// Full-covariance multivariate normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianParams", into = "GaussianParams")]
pub struct Gaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cholesky: DMatrix<f64>,
    log_normalizer: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl TryFrom<GaussianParams> for Gaussian {
    type Error = Error;

    fn try_from(params: GaussianParams) -> Result<Self> {
        let d = params.mean.len();
        if params.covariance.len() != d || params.covariance.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: params.covariance.len(),
            });
        }
        let cov = DMatrix::from_fn(d, d, |i, j| params.covariance[i][j]);
        Gaussian::new(DVector::from_vec(params.mean), cov)
    }
}

impl From<Gaussian> for GaussianParams {
    fn from(g: Gaussian) -> Self {
        let d = g.dim();
        Self {
            mean: g.mean.iter().copied().collect(),
            covariance: (0..d).map(|i| (0..d).map(|j| g.covariance[(i, j)]).collect()).collect(),
        }
    }
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Validation("gaussian needs at least one dimension".into()));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Fit("non-finite gaussian parameters".into()));
        }
        let chol = Cholesky::<f64, Dyn>::new(covariance.clone())
            .ok_or_else(|| Error::Fit("covariance is not positive definite".into()))?;
        let cholesky = chol.l();
        let log_det_half: f64 = cholesky.diagonal().iter().map(|v| v.ln()).sum();
        Ok(Self {
            mean,
            covariance,
            cholesky,
            log_normalizer: 0.5 * d as f64 * (2.0 * PI).ln() + log_det_half,
        })
    }

    /// Isotropic normal `N(mean, sigma² I)`.
    pub fn isotropic(mean: &[f64], sigma: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(DVector::from_column_slice(mean), DMatrix::from_diagonal_element(d, d, sigma * sigma))
    }

    pub fn standard(d: usize) -> Result<Self> {
        Self::isotropic(&vec![0.0; d], 1.0)
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Squared Mahalanobis distance to the mean.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        // forward substitution with the lower Cholesky factor
        let d = self.dim();
        let mut y = [0.0f64; 8];
        let mut heap;
        let y: &mut [f64] = if d <= y.len() {
            &mut y[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut total = 0.0;
        for i in 0..d {
            let mut v = x[i] - self.mean[i];
            for (j, yj) in y.iter().enumerate().take(i) {
                v -= self.cholesky[(i, j)] * yj;
            }
            v /= self.cholesky[(i, i)];
            y[i] = v;
            total += v * v;
        }
        total
    }
}

impl Generator for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        -0.5 * self.mahalanobis_sq(x) - self.log_normalizer
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        (&self.mean + &self.cholesky * z).iter().copied().collect()
    }
}

/// Adds `COVARIANCE_RIDGE · trace/d` (or `COVARIANCE_RIDGE` for a zero trace) to the diagonal.
pub(crate) fn ridge_for(cov: &DMatrix<f64>) -> f64 {
    let trace = cov.trace();
    if trace > 0.0 {
        COVARIANCE_RIDGE * trace / cov.nrows() as f64
    } else {
        COVARIANCE_RIDGE
    }
}

/// Weighted mean and (unregularized) covariance, using only the given weights.
pub(crate) fn weighted_moments(points: &[Point], weights: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let d = points[0].len();
    let total: f64 = weights.iter().sum();
    let mut mean = DVector::zeros(d);
    for (x, &w) in points.iter().zip(weights) {
        if w > 0.0 {
            for (m, xi) in mean.iter_mut().zip(x) {
                *m += w * xi;
            }
        }
    }
    mean /= total;
    let mut cov = DMatrix::zeros(d, d);
    for (x, &w) in points.iter().zip(weights) {
        if w > 0.0 {
            for i in 0..d {
                let di = x[i] - mean[i];
                for j in 0..=i {
                    cov[(i, j)] += w * di * (x[j] - mean[j]);
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[(j, i)] = cov[(i, j)];
        }
    }
    cov /= total;
    (mean, cov)
}

pub(crate) fn gaussian_from_moments(mean: DVector<f64>, mut cov: DMatrix<f64>, ridge: f64) -> Result<Gaussian> {
    for i in 0..cov.nrows() {
        cov[(i, i)] += ridge;
    }
    Gaussian::new(mean, cov)
}

/// Weighted maximum-likelihood Gaussian.
///
/// Requires at least `d + 1` points with positive weight.
pub fn fit_gaussian(sample: &WeightedSample) -> Result<Gaussian> {
    let d = sample.dim();
    let positive = sample.positive_count();
    if positive < d + 1 {
        return Err(Error::Fit(format!(
            "gaussian fit needs {} positive-weight points, got {positive}",
            d + 1
        )));
    }
    let (mean, cov) = weighted_moments(sample.points(), sample.weights());
    let ridge = ridge_for(&cov);
    gaussian_from_moments(mean, cov, ridge)
}

/// Fits with the given strategy; `Resample` draws `N` points with replacement.
pub fn fit_gaussian_with<R: Rng + ?Sized>(
    sample: &WeightedSample,
    strategy: FitStrategy,
    rng: &mut R,
) -> Result<Gaussian> {
    match strategy {
        FitStrategy::Weighted => fit_gaussian(sample),
        FitStrategy::Resample => fit_gaussian(&resample(sample, rng)?),
    }
}

/// Importance resampling: `N` draws with replacement proportional to the weights.
pub fn resample<R: Rng + ?Sized>(sample: &WeightedSample, rng: &mut R) -> Result<WeightedSample> {
    let index = WeightedIndex::new(sample.weights()).map_err(|e| Error::Fit(format!("resampling: {e}")))?;
    let points = (0..sample.len()).map(|_| sample.points()[index.sample(rng)].clone()).collect();
    WeightedSample::uniform(points)
}
