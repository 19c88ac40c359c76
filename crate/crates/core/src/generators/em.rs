use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::gaussian::{gaussian_from_moments, ridge_for, weighted_moments, Gaussian};
use super::{log_sum_exp, Generator, Point, WeightedSample};
use crate::error::{Error, Result};

const MAX_EM_ITERATIONS: usize = 300;
const EM_RELATIVE_TOLERANCE: f64 = 1e-10;
/// Responsibility mass below which a component counts as empty.
const EMPTY_COMPONENT_MASS: f64 = 1e-10;

/// Finite mixture of Gaussians, used as a weak learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<Gaussian>,
    pub weights: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(components: Vec<Gaussian>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::Validation("mixture needs one weight per component".into()));
        }
        let d = components[0].dim();
        if let Some(bad) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.dim(),
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation("mixture weights must be nonnegative and sum to 1".into()));
        }
        Ok(Self { components, weights })
    }
}

impl Generator for GaussianMixture {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(
            self.components
                .iter()
                .zip(&self.weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(c, w)| w.ln() + c.log_density(x)),
        )
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let index = WeightedIndex::new(&self.weights).expect("validated weights");
        self.components[index.sample(rng)].sample_one(rng)
    }

    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        let index = WeightedIndex::new(&self.weights).expect("validated weights");
        (0..n).map(|_| self.components[index.sample(rng)].sample_one(rng)).collect()
    }
}

/// Result of [`fit_gaussian_mixture_em`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    /// Weighted log-likelihood `Σ w_i log p(x_i)` after each iteration of the selected restart.
    pub log_likelihood_trace: Vec<f64>,
    /// Number of empty-component reseeds in the selected restart.
    pub reseeded: usize,
}

impl EmFit {
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Weighted EM for a `k`-component Gaussian mixture, best of `restarts` initializations.
///
/// Each point's responsibilities are scaled by its weight. The covariance
/// ridge is fixed per call from the overall weighted covariance, so
/// iterations stay (up to rounding) monotone in the weighted likelihood.
pub fn fit_gaussian_mixture_em<R: Rng + ?Sized>(
    sample: &WeightedSample,
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<EmFit> {
    if k == 0 {
        return Err(Error::Validation("mixture needs k >= 1".into()));
    }
    let d = sample.dim();
    if sample.positive_count() < k.max(d + 1) {
        return Err(Error::Fit(format!(
            "EM with k = {k} needs at least {} positive-weight points",
            k.max(d + 1)
        )));
    }
    let (_, overall) = weighted_moments(sample.points(), sample.weights());
    let ridge = ridge_for(&overall);

    let mut best: Option<EmFit> = None;
    for _ in 0..restarts.max(1) {
        let fit = em_once(sample, k, ridge, &overall, rng)?;
        if best.as_ref().is_none_or(|b| fit.log_likelihood() > b.log_likelihood()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Weighted k-means++ seeding: first center ∝ w, then ∝ w · D².
fn kmeans_pp_centers<R: Rng + ?Sized>(sample: &WeightedSample, k: usize, rng: &mut R) -> Vec<Point> {
    let points = sample.points();
    let weights = sample.weights();
    let first = WeightedIndex::new(weights).expect("positive weights").sample(rng);
    let mut centers = vec![points[first].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|x| squared_distance(x, &centers[0])).collect();
    while centers.len() < k {
        let scores: Vec<f64> = nearest.iter().zip(weights).map(|(d2, w)| d2 * w).collect();
        let next = match WeightedIndex::new(&scores) {
            Ok(index) => index.sample(rng),
            // every weighted point coincides with a center
            Err(_) => WeightedIndex::new(weights).expect("positive weights").sample(rng),
        };
        centers.push(points[next].clone());
        let c = centers.last().expect("just pushed");
        for (n, x) in nearest.iter_mut().zip(points) {
            *n = n.min(squared_distance(x, c));
        }
    }
    centers
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn em_once<R: Rng + ?Sized>(
    sample: &WeightedSample,
    k: usize,
    ridge: f64,
    overall: &nalgebra::DMatrix<f64>,
    rng: &mut R,
) -> Result<EmFit> {
    let points = sample.points();
    let weights = sample.weights();
    let n = points.len();
    let centers = kmeans_pp_centers(sample, k, rng);

    // hard assignment to the nearest center, then an M-step
    let mut resp = vec![0.0; n * k];
    for (i, x) in points.iter().enumerate() {
        let j = (0..k)
            .min_by(|&a, &b| squared_distance(x, &centers[a]).total_cmp(&squared_distance(x, &centers[b])))
            .expect("k >= 1");
        resp[i * k + j] = 1.0;
    }
    let mut reseeded = 0;
    let mut mixture = m_step(sample, &resp, k, ridge, overall, &mut reseeded)?;
    let mut trace = Vec::new();
    let mut log_probs = vec![0.0; k];
    for _ in 0..MAX_EM_ITERATIONS {
        // E-step
        let mut ll = 0.0;
        for (i, x) in points.iter().enumerate() {
            for (j, lp) in log_probs.iter_mut().enumerate() {
                *lp = if mixture.weights[j] > 0.0 {
                    mixture.weights[j].ln() + mixture.components[j].log_density(x)
                } else {
                    f64::NEG_INFINITY
                };
            }
            let total = log_sum_exp(log_probs.iter().copied());
            if weights[i] > 0.0 {
                ll += weights[i] * total;
            }
            for j in 0..k {
                resp[i * k + j] = (log_probs[j] - total).exp();
            }
        }
        trace.push(ll);
        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            if (ll - prev).abs() <= EM_RELATIVE_TOLERANCE * ll.abs().max(1.0) {
                break;
            }
        }
        mixture = m_step(sample, &resp, k, ridge, overall, &mut reseeded)?;
    }
    Ok(EmFit {
        mixture,
        log_likelihood_trace: trace,
        reseeded,
    })
}

fn m_step(
    sample: &WeightedSample,
    resp: &[f64],
    k: usize,
    ridge: f64,
    overall: &nalgebra::DMatrix<f64>,
    reseeded: &mut usize,
) -> Result<GaussianMixture> {
    let points = sample.points();
    let weights = sample.weights();
    let mut components = Vec::with_capacity(k);
    let mut mass = Vec::with_capacity(k);
    for j in 0..k {
        let w: Vec<f64> = weights.iter().enumerate().map(|(i, wi)| wi * resp[i * k + j]).collect();
        let total: f64 = w.iter().sum();
        if total <= EMPTY_COMPONENT_MASS {
            let (heaviest, _) = weights
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty sample");
            log::warn!("EM component {j} emptied; reseeding at the highest-weight point {heaviest}");
            *reseeded += 1;
            let mean = nalgebra::DVector::from_column_slice(&points[heaviest]);
            components.push(gaussian_from_moments(mean, overall.clone(), ridge)?);
            mass.push(EMPTY_COMPONENT_MASS);
            continue;
        }
        let (mean, cov) = weighted_moments(points, &w);
        components.push(gaussian_from_moments(mean, cov, ridge)?);
        mass.push(total);
    }
    let total: f64 = mass.iter().sum();
    GaussianMixture::new(components, mass.into_iter().map(|m| m / total).collect())
}
