//! Coverage and likelihood metrics, and a Gaussian KDE with cross-validated bandwidth.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::Point;

/// Floor applied to log-densities in the likelihood metric.
pub const LOG_DENSITY_FLOOR: f64 = -1e10;
/// Fraction of model mass left outside the coverage region.
pub const COVERAGE_QUANTILE: f64 = 0.05;
pub const MIN_COVERAGE_MODEL_SAMPLES: usize = 100;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_GRID_POINTS: usize = 20;
/// Kernel terms this far (in log space) below the largest are dropped; `e^-50` is below double precision.
const KERNEL_CUTOFF: f64 = 50.0;

/// Gaussian product-kernel density estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct KdeModel {
    anchors: Vec<f64>,
    dim: usize,
    bandwidth: f64,
}

impl KdeModel {
    pub fn new(points: &[Point], bandwidth: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("KDE needs at least one anchor".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Domain {
                name: "bandwidth",
                value: bandwidth,
                domain: "(0, inf)",
            });
        }
        let dim = check_dims(points)?;
        Ok(Self {
            anchors: points.iter().flatten().copied().collect(),
            dim,
            bandwidth,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.anchors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d2 = squared_distances(&self.anchors, self.dim, x);
        log_kernel_mean(&d2, self.bandwidth, self.dim)
    }

    pub fn log_density_many(&self, xs: &[Point]) -> Vec<f64> {
        xs.par_iter().map(|x| self.log_density(x)).collect()
    }
}

fn check_dims(points: &[Point]) -> Result<usize> {
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::Validation("points must have at least one coordinate".into()));
    }
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    Ok(dim)
}

fn squared_distances(anchors: &[f64], dim: usize, x: &[f64]) -> Vec<f64> {
    anchors
        .chunks_exact(dim)
        .map(|a| a.iter().zip(x).map(|(ai, xi)| (ai - xi) * (ai - xi)).sum())
        .collect()
}

/// `log (1/n) Σ N(0, h² I)(r_i)` from squared distances.
fn log_kernel_mean(d2: &[f64], h: f64, dim: usize) -> f64 {
    let inv = 0.5 / (h * h);
    let nearest = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for &r in d2 {
        let z = (r - nearest) * inv;
        if z < KERNEL_CUTOFF {
            sum += (-z).exp();
        }
    }
    let log_norm = 0.5 * dim as f64 * (2.0 * PI * h * h).ln();
    -nearest * inv + sum.ln() - (d2.len() as f64).ln() - log_norm
}

/// Pooled standard deviation `sqrt(mean per-coordinate variance)`.
pub fn pooled_std(points: &[Point]) -> f64 {
    let n = points.len() as f64;
    let d = points[0].len();
    let mut var = 0.0;
    for k in 0..d {
        let mean = points.iter().map(|p| p[k]).sum::<f64>() / n;
        var += points.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / n;
    }
    (var / d as f64).sqrt()
}

/// 20 log-spaced bandwidths over `[0.01, 2] × pooled std`.
pub fn default_bandwidth_grid(points: &[Point]) -> Vec<f64> {
    let std = pooled_std(points);
    let scale = if std > 0.0 { std } else { 1.0 };
    log_spaced(0.01 * scale, 2.0 * scale, DEFAULT_GRID_POINTS)
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Fold assignment that keeps exact duplicates together.
fn grouped_folds<R: Rng + ?Sized>(points: &[Point], folds: usize, rng: &mut R) -> Result<Vec<usize>> {
    let mut group_of: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<usize> = Vec::with_capacity(points.len());
    for p in points {
        let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
        let next = group_of.len();
        groups.push(*group_of.entry(key).or_insert(next));
    }
    let n_groups = group_of.len();
    if n_groups < folds {
        return Err(Error::Validation(format!(
            "{folds}-fold cross-validation needs at least {folds} distinct points, got {n_groups}"
        )));
    }
    let mut order: Vec<usize> = (0..n_groups).collect();
    order.shuffle(rng);
    let mut fold_of_group = vec![0; n_groups];
    for (rank, g) in order.into_iter().enumerate() {
        fold_of_group[g] = rank % folds;
    }
    Ok(groups.into_iter().map(|g| fold_of_group[g]).collect())
}

/// Mean held-out log-density for each bandwidth.
pub fn kde_cv_scores<R: Rng + ?Sized>(
    points: &[Point],
    bandwidth_grid: &[f64],
    folds: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if folds < 2 {
        return Err(Error::Validation("cross-validation needs at least 2 folds".into()));
    }
    if points.len() < folds {
        return Err(Error::Validation(format!(
            "{folds}-fold cross-validation needs at least {folds} points, got {}",
            points.len()
        )));
    }
    if bandwidth_grid.is_empty() || bandwidth_grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::Validation("bandwidth grid must be nonempty and positive".into()));
    }
    let dim = check_dims(points)?;
    let fold_of = grouped_folds(points, folds, rng)?;

    let mut totals = vec![0.0; bandwidth_grid.len()];
    for fold in 0..folds {
        let train: Vec<f64> = points
            .iter()
            .zip(&fold_of)
            .filter(|(_, f)| **f != fold)
            .flat_map(|(p, _)| p.iter().copied())
            .collect();
        let held_out: Vec<&Point> = points.iter().zip(&fold_of).filter(|(_, f)| **f == fold).map(|(p, _)| p).collect();
        let per_point: Vec<Vec<f64>> = held_out
            .par_iter()
            .map(|x| {
                let d2 = squared_distances(&train, dim, x);
                bandwidth_grid.iter().map(|&h| log_kernel_mean(&d2, h, dim)).collect()
            })
            .collect();
        for values in per_point {
            for (t, v) in totals.iter_mut().zip(values) {
                *t += v;
            }
        }
    }
    Ok(totals.into_iter().map(|t| t / points.len() as f64).collect())
}

/// Picks the bandwidth with the largest mean held-out log-density; ties go to the larger bandwidth.
pub fn kde_fit<R: Rng + ?Sized>(points: &[Point], bandwidth_grid: &[f64], folds: usize, rng: &mut R) -> Result<KdeModel> {
    let scores = kde_cv_scores(points, bandwidth_grid, folds, rng)?;
    let mut best: Option<(f64, f64)> = None;
    for (&h, &s) in bandwidth_grid.iter().zip(&scores) {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            Some((bh, bs)) if bs > s || (bs == s && bh >= h) => Some((bh, bs)),
            _ => Some((h, s)),
        };
    }
    let (h, _) = best.ok_or_else(|| {
        Error::Fit("every bandwidth gives -inf held-out log-density; try a wider bandwidth grid".into())
    })?;
    KdeModel::new(points, h)
}

/// KDE with the default grid and fold count.
pub fn kde_fit_default<R: Rng + ?Sized>(points: &[Point], rng: &mut R) -> Result<KdeModel> {
    if points.is_empty() {
        return Err(Error::Validation("KDE needs at least one point".into()));
    }
    kde_fit(points, &default_bandwidth_grid(points), DEFAULT_FOLDS, rng)
}

/// Coverage threshold: the `⌈0.05 n⌉`-th smallest model value at model samples.
///
/// An order statistic rather than an interpolated quantile, so the metric
/// depends only on the ordering of the density values.
pub fn coverage_threshold(model_values: &[f64]) -> Result<f64> {
    if model_values.len() < MIN_COVERAGE_MODEL_SAMPLES {
        return Err(Error::Validation(format!(
            "coverage needs at least {MIN_COVERAGE_MODEL_SAMPLES} model samples, got {}",
            model_values.len()
        )));
    }
    let mut sorted = model_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((COVERAGE_QUANTILE * sorted.len() as f64).ceil() as usize).max(1) - 1;
    Ok(sorted[k])
}

/// Fraction of data values at or above the coverage threshold.
///
/// Ties count as inside, so a flat model density covers all of its support.
pub fn coverage_from_values(model_at_model: &[f64], model_at_data: &[f64]) -> Result<f64> {
    if model_at_data.is_empty() {
        return Err(Error::Validation("coverage needs data samples".into()));
    }
    let t = coverage_threshold(model_at_model)?;
    let inside = model_at_data.iter().filter(|v| **v >= t).count();
    Ok(inside as f64 / model_at_data.len() as f64)
}

/// Coverage `C`: data mass inside the region holding 95% of the model's mass.
///
/// Works with any strictly increasing transform of the density, so a
/// log-density can be passed directly.
pub fn coverage_c<F>(model_density: F, model_samples: &[Point], data_samples: &[Point]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let at_model: Vec<f64> = model_samples.par_iter().map(|x| model_density(x)).collect();
    let at_data: Vec<f64> = data_samples.par_iter().map(|x| model_density(x)).collect();
    coverage_from_values(&at_model, &at_data)
}

/// Mean of floored log-densities.
pub fn log_likelihood_from_values(log_densities: &[f64]) -> Result<f64> {
    if log_densities.is_empty() {
        return Err(Error::Validation("likelihood needs data samples".into()));
    }
    let total: f64 = log_densities
        .iter()
        .map(|v| if v.is_nan() { LOG_DENSITY_FLOOR } else { v.max(LOG_DENSITY_FLOOR) })
        .sum();
    Ok(total / log_densities.len() as f64)
}

/// Likelihood `L = (1/N) Σ log p_model(x_i)` with log-densities floored at [`LOG_DENSITY_FLOOR`].
pub fn log_likelihood_l<F>(model_log_density: F, data_samples: &[Point]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values: Vec<f64> = data_samples.par_iter().map(|x| model_log_density(x)).collect();
    log_likelihood_from_values(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{Gaussian, Generator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kde_matches_direct_sum() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![-3.0, 0.5]];
        let h = 0.7;
        let kde = KdeModel::new(&pts, h).unwrap();
        let x = [0.3, -0.2];
        let direct: f64 = pts
            .iter()
            .map(|a| {
                let r2: f64 = a.iter().zip(&x).map(|(u, v)| (u - v).powi(2)).sum();
                (-r2 / (2.0 * h * h)).exp() / (2.0 * PI * h * h)
            })
            .sum::<f64>()
            / 3.0;
        assert!((kde.log_density(&x) - direct.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_point_cannot_be_cross_validated() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(kde_fit(&[vec![1.0]], &[0.5], 5, &mut rng).is_err());
        assert!(kde_fit(&[vec![1.0], vec![2.0]], &[], 2, &mut rng).is_err());
    }

    #[test]
    fn duplicates_keep_the_bandwidth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = Gaussian::standard(2).unwrap().sample(300, &mut rng);
        let doubled: Vec<Point> = pts.iter().flat_map(|p| [p.clone(), p.clone()]).collect();
        let grid = log_spaced(0.05, 1.0, 12);
        let a = kde_fit(&pts, &grid, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = kde_fit(&doubled, &grid, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.bandwidth(), b.bandwidth());
    }

    #[test]
    fn threshold_is_an_order_statistic() {
        let values: Vec<f64> = (0..200).map(f64::from).collect();
        assert_eq!(coverage_threshold(&values).unwrap(), 9.0);
        assert!(coverage_threshold(&values[..99]).is_err());
        assert_eq!(coverage_from_values(&values, &[5.0, 10.0, 100.0, 9.0]).unwrap(), 0.75);
        assert_eq!(coverage_from_values(&[1.0; 100], &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn likelihood_floor() {
        assert_eq!(log_likelihood_from_values(&[f64::NEG_INFINITY]).unwrap(), LOG_DENSITY_FLOOR);
        assert_eq!(log_likelihood_from_values(&[-1.0, -3.0]).unwrap(), -2.0);
        assert!(log_likelihood_from_values(&[]).is_err());
    }
}
