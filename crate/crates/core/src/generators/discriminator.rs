use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Generator, GeneratorMixture, Point};
use crate::divergence::DISCRIMINATOR_CLAMP;
use crate::error::{Error, Result};
use crate::metrics::{kde_fit_default, KdeModel};

pub const LOGISTIC_L2: f64 = 1e-3;
pub const LOGISTIC_GRADIENT_TOLERANCE: f64 = 1e-6;
pub const LOGISTIC_MAX_ITERATIONS: usize = 200;

/// Estimates `dP_d / (dP_d + dP_g)`.
pub trait Discriminator {
    /// Probability that `x` came from the data, clamped into `[ε, 1-ε]`.
    fn predict(&self, x: &[f64]) -> f64;

    fn predict_many(&self, xs: &[Point]) -> Vec<f64>
    where
        Self: Sync,
    {
        use rayon::prelude::*;
        xs.par_iter().map(|x| self.predict(x)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorMode {
    /// KDE of the data against the analytic model density.
    #[default]
    Oracle,
    /// Quadratic logistic regression on data-vs-model samples.
    Classifier,
}

pub(crate) fn clamp_probability(d: f64) -> f64 {
    if d.is_nan() {
        0.5
    } else {
        d.clamp(DISCRIMINATOR_CLAMP, 1.0 - DISCRIMINATOR_CLAMP)
    }
}

/// `D = p_d / (p_d + p_g)` from log-densities, clamped.
pub fn oracle_probability(log_data: f64, log_model: f64) -> f64 {
    if log_data == f64::NEG_INFINITY && log_model == f64::NEG_INFINITY {
        return 0.5;
    }
    clamp_probability(1.0 / (1.0 + (log_model - log_data).exp()))
}

/// Optimal discriminator with a KDE standing in for the data density.
#[derive(Clone, Debug)]
pub struct OracleDiscriminator {
    data_density: Arc<KdeModel>,
    model: GeneratorMixture,
}

impl OracleDiscriminator {
    pub fn new(data_density: Arc<KdeModel>, model: GeneratorMixture) -> Self {
        Self { data_density, model }
    }

    pub fn data_density(&self) -> &KdeModel {
        &self.data_density
    }
}

impl Discriminator for OracleDiscriminator {
    fn predict(&self, x: &[f64]) -> f64 {
        oracle_probability(self.data_density.log_density(x), self.model.log_density(x))
    }
}

/// L2-regularized logistic regression on standardized `(1, x, x_i x_j)` features.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticDiscriminator {
    center: Vec<f64>,
    scale: Vec<f64>,
    coefficients: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

fn feature_count(d: usize) -> usize {
    1 + d + d * (d + 1) / 2
}

impl LogisticDiscriminator {
    fn features_into(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        out[0] = 1.0;
        for k in 0..d {
            out[1 + k] = (x[k] - self.center[k]) / self.scale[k];
        }
        let mut idx = 1 + d;
        for i in 0..d {
            for j in i..d {
                out[idx] = out[1 + i] * out[1 + j];
                idx += 1;
            }
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut f = vec![0.0; self.coefficients.len()];
        self.features_into(x, &mut f);
        f.iter().zip(self.coefficients.iter()).map(|(a, b)| a * b).sum()
    }

    /// Trains data (label 1) against model samples (label 0) by damped Newton steps.
    pub fn fit(data: &[Point], model_samples: &[Point]) -> Result<Self> {
        if data.is_empty() || model_samples.is_empty() {
            return Err(Error::Validation("classifier needs data and model samples".into()));
        }
        let d = data[0].len();
        let all: Vec<&Point> = data.iter().chain(model_samples).collect();
        if all.iter().any(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: all.iter().find(|p| p.len() != d).map_or(0, |p| p.len()),
            });
        }
        let n = all.len();
        let center: Vec<f64> = (0..d).map(|k| all.iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
        let scale: Vec<f64> = (0..d)
            .map(|k| {
                let var = all.iter().map(|p| (p[k] - center[k]).powi(2)).sum::<f64>() / n as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let p = feature_count(d);
        let mut model = Self {
            center,
            scale,
            coefficients: DVector::zeros(p),
            converged: false,
            iterations: 0,
            gradient_norm: f64::INFINITY,
        };
        let mut x = DMatrix::zeros(n, p);
        let mut row = vec![0.0; p];
        for (i, pt) in all.iter().enumerate() {
            model.features_into(pt, &mut row);
            for (j, v) in row.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        let y: Vec<f64> = (0..n).map(|i| if i < data.len() { 1.0 } else { 0.0 }).collect();
        let penalty = DVector::from_fn(p, |j, _| if j == 0 { 0.0 } else { LOGISTIC_L2 });

        let objective = |w: &DVector<f64>| -> f64 {
            let s = &x * w;
            let loss: f64 = s.iter().zip(&y).map(|(si, yi)| softplus(*si) - yi * si).sum::<f64>() / n as f64;
            loss + 0.5 * w.iter().zip(penalty.iter()).map(|(wj, l)| l * wj * wj).sum::<f64>()
        };

        let mut w = DVector::zeros(p);
        let mut current = objective(&w);
        for iteration in 0..LOGISTIC_MAX_ITERATIONS {
            let s = &x * &w;
            let prob: Vec<f64> = s.iter().map(|v| sigmoid(*v)).collect();
            let residual = DVector::from_fn(n, |i, _| prob[i] - y[i]);
            let grad = x.tr_mul(&residual) / n as f64 + penalty.component_mul(&w);
            model.gradient_norm = grad.norm();
            model.iterations = iteration;
            if model.gradient_norm <= LOGISTIC_GRADIENT_TOLERANCE {
                model.converged = true;
                break;
            }
            let mut weighted = x.clone();
            for (i, pr) in prob.iter().enumerate() {
                let sw = (pr * (1.0 - pr)).max(1e-12);
                weighted.row_mut(i).scale_mut(sw);
            }
            let mut hessian = x.tr_mul(&weighted) / n as f64;
            for j in 0..p {
                hessian[(j, j)] += penalty[j] + 1e-12;
            }
            let step = match hessian.cholesky() {
                Some(ch) => ch.solve(&grad),
                None => grad.clone(),
            };
            let slope = grad.dot(&step);
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-10 {
                let candidate = &w - &step * t;
                let value = objective(&candidate);
                if value <= current - 1e-4 * t * slope {
                    w = candidate;
                    current = value;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // no further decrease available at working precision
                model.iterations = iteration + 1;
                break;
            }
            model.iterations = iteration + 1;
        }
        if !model.converged {
            let s = &x * &w;
            let residual = DVector::from_fn(n, |i, _| sigmoid(s[i]) - y[i]);
            let grad = x.tr_mul(&residual) / n as f64 + penalty.component_mul(&w);
            model.gradient_norm = grad.norm();
            model.converged = model.gradient_norm <= LOGISTIC_GRADIENT_TOLERANCE;
            if !model.converged {
                log::warn!(
                    "logistic discriminator stopped at gradient norm {:.3e} after {} iterations",
                    model.gradient_norm,
                    model.iterations
                );
            }
        }
        model.coefficients = w;
        Ok(model)
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

impl Discriminator for LogisticDiscriminator {
    fn predict(&self, x: &[f64]) -> f64 {
        clamp_probability(sigmoid(self.logit(x)))
    }
}

#[derive(Clone, Debug)]
pub enum FittedDiscriminator {
    Oracle(OracleDiscriminator),
    Classifier(LogisticDiscriminator),
}

impl Discriminator for FittedDiscriminator {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Self::Oracle(d) => d.predict(x),
            Self::Classifier(d) => d.predict(x),
        }
    }
}

/// Fits a discriminator between `data` and `model`.
///
/// Oracle mode cross-validates a KDE of the data; use
/// [`OracleDiscriminator::new`] to reuse one across calls.
pub fn fit_discriminator<R: Rng + ?Sized>(
    data: &[Point],
    model: &GeneratorMixture,
    mode: DiscriminatorMode,
    rng: &mut R,
) -> Result<FittedDiscriminator> {
    if data.is_empty() {
        return Err(Error::Validation("discriminator needs data".into()));
    }
    match mode {
        DiscriminatorMode::Oracle => {
            let kde = kde_fit_default(data, rng)?;
            Ok(FittedDiscriminator::Oracle(OracleDiscriminator::new(Arc::new(kde), model.clone())))
        }
        DiscriminatorMode::Classifier => {
            let samples = model.sample(data.len(), rng);
            Ok(FittedDiscriminator::Classifier(LogisticDiscriminator::fit(data, &samples)?))
        }
    }
}
