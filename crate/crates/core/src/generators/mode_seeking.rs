use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::gaussian::{gaussian_from_moments, ridge_for, weighted_moments, Gaussian};
use super::{Generator, WeightedSample};
use crate::error::{Error, Result};

/// Settings for [`fit_mode_seeking`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeSeekingConfig {
    pub iterations: usize,
    /// Initial covariance as a fraction of the weighted sample covariance.
    pub init_scale: f64,
    /// Initial weight of the Gaussian against the uniform background.
    pub init_fraction: f64,
}

impl Default for ModeSeekingConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            init_scale: 0.05,
            init_fraction: 0.5,
        }
    }
}

/// Fits one Gaussian that locks onto a single dense region of the weighted sample.
///
/// The Gaussian is fitted jointly with a fixed uniform background over the
/// bounding box of the positive-weight points, starting from a small
/// covariance around a weighted random point. Points the Gaussian does not
/// explain are absorbed by the background, so the fit collapses onto one mode
/// the way an unconditioned GAN tends to. Only the Gaussian is returned.
pub fn fit_mode_seeking<R: Rng + ?Sized>(
    sample: &WeightedSample,
    config: &ModeSeekingConfig,
    rng: &mut R,
) -> Result<Gaussian> {
    let d = sample.dim();
    if sample.positive_count() < d + 1 {
        return Err(Error::Fit(format!(
            "mode-seeking fit needs {} positive-weight points, got {}",
            d + 1,
            sample.positive_count()
        )));
    }
    if !(config.init_scale > 0.0 && config.init_fraction > 0.0 && config.init_fraction < 1.0) {
        return Err(Error::Config("mode-seeking init_scale must be > 0 and init_fraction in (0,1)".into()));
    }
    let points = sample.points();
    let weights = sample.weights();

    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for (x, w) in points.iter().zip(weights) {
        if *w > 0.0 {
            for k in 0..d {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
    }
    let log_background: f64 = -lo.iter().zip(&hi).map(|(a, b)| (b - a).max(1e-12).ln()).sum::<f64>();

    let (_, overall) = weighted_moments(points, weights);
    let ridge = ridge_for(&overall);
    let start = WeightedIndex::new(weights).map_err(|e| Error::Fit(e.to_string()))?.sample(rng);
    let mut gaussian = gaussian_from_moments(
        nalgebra::DVector::from_column_slice(&points[start]),
        &overall * config.init_scale,
        ridge,
    )?;
    let mut alpha = config.init_fraction;
    let mut effective = vec![0.0; points.len()];
    for _ in 0..config.iterations {
        let log_alpha = alpha.ln();
        let log_rest = (1.0 - alpha).ln() + log_background;
        for ((e, x), w) in effective.iter_mut().zip(points).zip(weights) {
            let a = log_alpha + gaussian.log_density(x);
            // responsibility of the Gaussian: 1 / (1 + exp(rest - a))
            *e = if *w > 0.0 { w / (1.0 + (log_rest - a).exp()) } else { 0.0 };
        }
        let mass: f64 = effective.iter().sum();
        if !(mass > 1e-9) || effective.iter().filter(|e| **e > 0.0).count() < d + 1 {
            log::debug!("mode-seeking fit lost its support; falling back to the weighted MLE");
            return super::fit_gaussian(sample);
        }
        alpha = mass.min(1.0 - 1e-9);
        let (mean, cov) = weighted_moments(points, &effective);
        gaussian = gaussian_from_moments(mean, cov, ridge)?;
    }
    Ok(gaussian)
}
