use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{log_sum_exp, Generator, Point, WeakGenerator};
use crate::error::{check_unit_interval, Error, Result};

/// Additive mixture `Σ α_i G_i` built one component at a time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureParts")]
pub struct GeneratorMixture {
    components: Vec<WeakGenerator>,
    alphas: Vec<f64>,
}

#[derive(Deserialize)]
struct MixtureParts {
    components: Vec<WeakGenerator>,
    alphas: Vec<f64>,
}

impl TryFrom<MixtureParts> for GeneratorMixture {
    type Error = Error;

    fn try_from(parts: MixtureParts) -> Result<Self> {
        Self::from_parts(parts.components, parts.alphas)
    }
}

impl GeneratorMixture {
    pub fn single(component: WeakGenerator) -> Self {
        Self {
            components: vec![component],
            alphas: vec![1.0],
        }
    }

    pub fn from_parts(components: Vec<WeakGenerator>, alphas: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != alphas.len() {
            return Err(Error::Validation(format!(
                "mixture needs one alpha per component ({} components, {} alphas)",
                components.len(),
                alphas.len()
            )));
        }
        let d = components[0].dim();
        if let Some(bad) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.dim(),
            });
        }
        let total: f64 = alphas.iter().sum();
        if alphas.iter().any(|a| !(*a >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("alphas must be nonnegative and sum to 1, got {total}")));
        }
        Ok(Self { components, alphas })
    }

    /// Equal-weight mixture.
    pub fn uniform(components: Vec<WeakGenerator>) -> Result<Self> {
        let n = components.len();
        Self::from_parts(components, vec![1.0 / n as f64; n])
    }

    pub fn components(&self) -> &[WeakGenerator] {
        &self.components
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `G ← (1-β) G + β g`. With `β = 1` the old components keep zero weight.
    pub fn add_component(&mut self, component: WeakGenerator, beta: f64) -> Result<()> {
        check_unit_interval("beta", beta)?;
        if component.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: component.dim(),
            });
        }
        for a in self.alphas.iter_mut() {
            *a *= 1.0 - beta;
        }
        self.components.push(component);
        self.alphas.push(beta);
        // absorb rounding so the alphas keep summing to 1
        let total: f64 = self.alphas.iter().sum();
        for a in self.alphas.iter_mut() {
            *a /= total;
        }
        Ok(())
    }

    /// Log-density with a dimension check.
    pub fn mixture_log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.log_density(x))
    }
}

impl Generator for GeneratorMixture {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(
            self.components
                .iter()
                .zip(&self.alphas)
                .filter(|(_, a)| **a > 0.0)
                .map(|(c, a)| a.ln() + c.log_density(x)),
        )
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let index = WeightedIndex::new(&self.alphas).expect("validated alphas");
        self.components[index.sample(rng)].sample_one(rng)
    }

    /// Two-step sampling: a component index from the alphas, then a point from it.
    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        if n == 0 {
            return Vec::new();
        }
        let index = WeightedIndex::new(&self.alphas).expect("validated alphas");
        (0..n).map(|_| self.components[index.sample(rng)].sample_one(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::Gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn component(x: f64) -> WeakGenerator {
        WeakGenerator::Gaussian(Gaussian::isotropic(&[x], 1.0).unwrap())
    }

    #[test]
    fn alpha_bookkeeping() {
        let mut m = GeneratorMixture::single(component(0.0));
        m.add_component(component(1.0), 0.5).unwrap();
        assert_eq!(m.alphas(), &[0.5, 0.5]);

        let mut m = GeneratorMixture::single(component(0.0));
        for t in 2..=7 {
            m.add_component(component(t as f64), 1.0 / t as f64).unwrap();
        }
        assert!(m.alphas().iter().all(|a| (a - 1.0 / 7.0).abs() < 1e-12));

        m.add_component(component(9.0), 1.0).unwrap();
        assert_eq!(m.alphas().last(), Some(&1.0));
        assert!(m.alphas()[..7].iter().all(|a| *a == 0.0));
        assert!(m.add_component(component(9.0), 0.0).is_err());
        assert!(m.add_component(component(9.0), 1.5).is_err());
    }

    #[test]
    fn log_density_cases() {
        let m = GeneratorMixture::single(component(0.0));
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((m.log_density(&[0.0]) + half_ln_2pi).abs() < 1e-15);
        assert!(m.mixture_log_density(&[0.0, 1.0]).is_err());

        let same = GeneratorMixture::from_parts(vec![component(0.3), component(0.3)], vec![0.2, 0.8]).unwrap();
        assert!((same.log_density(&[1.0]) - component(0.3).log_density(&[1.0])).abs() < 1e-14);

        let first = GeneratorMixture::from_parts(vec![component(0.0), component(5.0)], vec![1.0, 0.0]).unwrap();
        assert_eq!(first.log_density(&[2.0]), component(0.0).log_density(&[2.0]));
    }

    #[test]
    fn sampling_follows_alphas() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = GeneratorMixture::from_parts(vec![component(-50.0), component(50.0)], vec![0.5, 0.5]).unwrap();
        assert!(m.sample(0, &mut rng).is_empty());
        let xs = m.sample(10_000, &mut rng);
        let left = xs.iter().filter(|x| x[0] < 0.0).count() as f64 / 1e4;
        assert!((left - 0.5).abs() < 0.02);

        let only = GeneratorMixture::from_parts(vec![component(-50.0), component(50.0)], vec![1.0, 0.0]).unwrap();
        assert!(only.sample(500, &mut rng).iter().all(|x| x[0] < 0.0));

        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(m.sample(20, &mut a), m.sample(20, &mut b));
    }

    #[test]
    fn rejects_invalid_parts() {
        assert!(GeneratorMixture::from_parts(vec![component(0.0)], vec![0.9]).is_err());
        assert!(GeneratorMixture::from_parts(vec![], vec![]).is_err());
        let json = r#"{"components":[{"type":"gaussian","mean":[0.0],"covariance":[[1.0]]}],"alphas":[0.5]}"#;
        assert!(serde_json::from_str::<GeneratorMixture>(json).is_err());
    }
}
