//! f-divergences between finite discrete distributions.
//!
//! `D_f(Q || P) = Σ p_i f(q_i / p_i)` over atoms charged by both, plus the
//! extended-value boundary terms `f(0) P(q = 0) + f°(0) Q(p = 0)`, where
//! `f°(u) = u f(1/u)`. Natural logarithms throughout.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// Normalization tolerance for [`DiscreteDistribution`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Clamp applied to discriminator outputs before mapping them to ratios.
pub const DISCRIMINATOR_CLAMP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FDivergenceKind {
    /// `f(u) = -ln u`, so `D_f(Q || P) = Σ p ln(p / q)`.
    KullbackLeibler,
    /// `f(u) = u ln u`, so `D_f(Q || P) = Σ q ln(q / p)`.
    ReverseKullbackLeibler,
    /// `f(u) = u ln u - (u + 1) ln((u + 1) / 2)`.
    JensenShannon,
    /// `f(u) = |u - 1|`.
    TotalVariation,
    /// `f(u) = (√u - 1)²`.
    SquaredHellinger,
}

impl FDivergenceKind {
    pub const ALL: [FDivergenceKind; 5] = [
        FDivergenceKind::KullbackLeibler,
        FDivergenceKind::ReverseKullbackLeibler,
        FDivergenceKind::JensenShannon,
        FDivergenceKind::TotalVariation,
        FDivergenceKind::SquaredHellinger,
    ];

    /// Kinds whose square root satisfies the triangle inequality.
    pub const HILBERTIAN: [FDivergenceKind; 3] = [
        FDivergenceKind::JensenShannon,
        FDivergenceKind::TotalVariation,
        FDivergenceKind::SquaredHellinger,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FDivergenceKind::KullbackLeibler => "kl",
            FDivergenceKind::ReverseKullbackLeibler => "reverse_kl",
            FDivergenceKind::JensenShannon => "js",
            FDivergenceKind::TotalVariation => "tv",
            FDivergenceKind::SquaredHellinger => "hellinger",
        }
    }

    pub fn is_hilbertian(self) -> bool {
        Self::HILBERTIAN.contains(&self)
    }

    /// The generator `f` on `[0, ∞)`; `f(0)` is the analytic limit.
    pub fn f(self, u: f64) -> f64 {
        if u == 0.0 {
            return self.f_at_zero();
        }
        match self {
            FDivergenceKind::KullbackLeibler => -u.ln(),
            FDivergenceKind::ReverseKullbackLeibler => u * u.ln(),
            FDivergenceKind::JensenShannon => {
                // u ln(2u / (u + 1)) - ln((u + 1) / 2), arranged to avoid
                // cancellation for large u.
                u * (2.0 * u / (u + 1.0)).ln() - ((u + 1.0) / 2.0).ln()
            }
            FDivergenceKind::TotalVariation => (u - 1.0).abs(),
            FDivergenceKind::SquaredHellinger => {
                let s = u.sqrt() - 1.0;
                s * s
            }
        }
    }

    /// A subderivative of `f` at 1.
    pub fn derivative_at_one(self) -> f64 {
        match self {
            FDivergenceKind::KullbackLeibler => -1.0,
            FDivergenceKind::ReverseKullbackLeibler => 1.0,
            _ => 0.0,
        }
    }

    /// `f₀(u) = f(u) - (u - 1) f'(1)`: nonnegative, minimal at 1.
    pub fn f0(self, u: f64) -> f64 {
        if u == 0.0 {
            return self.f0_at_zero();
        }
        self.f(u) - (u - 1.0) * self.derivative_at_one()
    }

    /// `f°(u) = u f(1/u)`; `f°(0)` is the analytic limit.
    pub fn f_conjugate(self, u: f64) -> f64 {
        if u == 0.0 {
            return self.f_conjugate_at_zero();
        }
        u * self.f(1.0 / u)
    }

    pub fn f_at_zero(self) -> f64 {
        match self {
            FDivergenceKind::KullbackLeibler => f64::INFINITY,
            FDivergenceKind::ReverseKullbackLeibler => 0.0,
            FDivergenceKind::JensenShannon => LN_2,
            FDivergenceKind::TotalVariation | FDivergenceKind::SquaredHellinger => 1.0,
        }
    }

    /// `lim_{u→0} u f(1/u)`.
    pub fn f_conjugate_at_zero(self) -> f64 {
        match self {
            FDivergenceKind::KullbackLeibler => 0.0,
            FDivergenceKind::ReverseKullbackLeibler => f64::INFINITY,
            FDivergenceKind::JensenShannon => LN_2,
            FDivergenceKind::TotalVariation | FDivergenceKind::SquaredHellinger => 1.0,
        }
    }

    fn f0_at_zero(self) -> f64 {
        self.f_at_zero() + self.derivative_at_one()
    }

    fn f0_conjugate_at_zero(self) -> f64 {
        self.f_conjugate_at_zero() - self.derivative_at_one()
    }
}

/// A probability vector over an indexed finite support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiscreteDistribution {
    masses: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::Validation("distribution has empty support".into()));
        }
        if let Some(i) = masses.iter().position(|m| m.is_nan()) {
            return Err(Error::Validation(format!("mass at atom {i} is NaN")));
        }
        if let Some(i) = masses.iter().position(|&m| m < 0.0 || m.is_infinite()) {
            return Err(Error::Validation(format!(
                "mass at atom {i} is {} (must be finite and nonnegative)",
                masses[i]
            )));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Validation(format!(
                "masses sum to {total}, not 1"
            )));
        }
        Ok(Self { masses })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Validation(format!(
                "weight at atom {i} is {} (must be finite and nonnegative)",
                weights[i]
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Validation("weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; n])
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// `(1 - beta) self + beta other`, renormalized against rounding.
    pub fn mix(&self, other: &Self, beta: f64) -> Result<Self> {
        check_same_support(self, other)?;
        let mixed: Vec<f64> = self
            .masses
            .iter()
            .zip(&other.masses)
            .map(|(a, b)| ((1.0 - beta) * a + beta * b).max(0.0))
            .collect();
        Self::from_weights(&mixed)
    }

    /// Largest atomwise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.masses
            .iter()
            .zip(&other.masses)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for DiscreteDistribution {
    type Error = Error;

    fn try_from(masses: Vec<f64>) -> Result<Self> {
        Self::new(masses)
    }
}

impl From<DiscreteDistribution> for Vec<f64> {
    fn from(d: DiscreteDistribution) -> Self {
        d.masses
    }
}

pub(crate) fn check_same_support(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::SupportMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn weighted_boundary(constant: f64, mass: f64) -> f64 {
    if mass > 0.0 {
        constant * mass
    } else {
        0.0
    }
}

/// Evaluates `Σ p f(q/p) + f(0) P(q=0) + f°(0) Q(p=0)` for an arbitrary
/// scalar map. Slices must have equal length; masses are not revalidated.
pub(crate) fn divergence_with<F>(q: &[f64], p: &[f64], f: F, f_zero: f64, f_conj_zero: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    debug_assert_eq!(q.len(), p.len());
    let mut inner = 0.0;
    let mut p_where_q_zero = 0.0;
    let mut q_where_p_zero = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        match (qi > 0.0, pi > 0.0) {
            (true, true) => inner += pi * f(qi / pi),
            (false, true) => p_where_q_zero += pi,
            (true, false) => q_where_p_zero += qi,
            (false, false) => {}
        }
    }
    inner + weighted_boundary(f_zero, p_where_q_zero) + weighted_boundary(f_conj_zero, q_where_p_zero)
}

pub(crate) fn f_divergence_slices(kind: FDivergenceKind, q: &[f64], p: &[f64]) -> f64 {
    divergence_with(q, p, |u| kind.f(u), kind.f_at_zero(), kind.f_conjugate_at_zero())
}

pub(crate) fn f0_divergence_slices(kind: FDivergenceKind, q: &[f64], p: &[f64]) -> f64 {
    divergence_with(q, p, |u| kind.f0(u), kind.f0_at_zero(), kind.f0_conjugate_at_zero())
}

pub(crate) fn conjugate_divergence_slices(kind: FDivergenceKind, q: &[f64], p: &[f64]) -> f64 {
    // The conjugate of f° is f again, so its boundary constants swap.
    divergence_with(
        q,
        p,
        |u| kind.f_conjugate(u),
        kind.f_conjugate_at_zero(),
        kind.f_at_zero(),
    )
}

/// `D_f(q || p)`; may be `+∞`.
pub fn f_divergence(kind: FDivergenceKind, q: &DiscreteDistribution, p: &DiscreteDistribution) -> Result<f64> {
    check_same_support(q, p)?;
    Ok(f_divergence_slices(kind, q.masses(), p.masses()))
}

/// `D_{f₀}(q || p)`, equal to [`f_divergence`] for every pair.
pub fn normalized_f_divergence(
    kind: FDivergenceKind,
    q: &DiscreteDistribution,
    p: &DiscreteDistribution,
) -> Result<f64> {
    check_same_support(q, p)?;
    Ok(f0_divergence_slices(kind, q.masses(), p.masses()))
}

/// `D_{f°}(q || p)`, equal to `D_f(p || q)`.
pub fn conjugate_f_divergence(
    kind: FDivergenceKind,
    q: &DiscreteDistribution,
    p: &DiscreteDistribution,
) -> Result<f64> {
    check_same_support(q, p)?;
    Ok(conjugate_divergence_slices(kind, q.masses(), p.masses()))
}

/// Standard `KL(a || b) = Σ a ln(a / b)`.
pub(crate) fn kl_standard(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(ai, _)| **ai > 0.0)
        .map(|(&ai, &bi)| if bi > 0.0 { ai * (ai / bi).ln() } else { f64::INFINITY })
        .sum()
}

/// Returns `(D_JS(p || q), KL(q || m) + KL(p || m))` with `m = (p + q) / 2`.
pub fn js_decomposition_check(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<(f64, f64)> {
    let direct = f_divergence(FDivergenceKind::JensenShannon, p, q)?;
    let m: Vec<f64> = p
        .masses()
        .iter()
        .zip(q.masses())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let split = kl_standard(q.masses(), &m) + kl_standard(p.masses(), &m);
    Ok((direct, split))
}

/// Maps a discriminator output to the density ratio `dP_g / dP_d = (1 - d) / d`.
///
/// Inputs are clamped to `[ε, 1 - ε]` with `ε = 1e-6`.
pub fn density_ratio_from_discriminator(d: f64) -> f64 {
    let d = d.clamp(DISCRIMINATOR_CLAMP, 1.0 - DISCRIMINATOR_CLAMP);
    (1.0 - d) / d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(m: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(m.to_vec()).unwrap()
    }

    #[test]
    fn js_identity_is_zero() {
        let p = dist(&[0.3, 0.7]);
        assert_eq!(f_divergence(FDivergenceKind::JensenShannon, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn total_variation_by_hand() {
        let d = f_divergence(FDivergenceKind::TotalVariation, &dist(&[0.5, 0.5]), &dist(&[0.7, 0.3])).unwrap();
        assert!((d - 0.4).abs() < 1e-12);
    }

    #[test]
    fn js_disjoint_supports() {
        let d = f_divergence(FDivergenceKind::JensenShannon, &dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap();
        assert!((d - 2.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn js_decomposition_examples() {
        let (a, b) = js_decomposition_check(&dist(&[1.0]), &dist(&[1.0])).unwrap();
        assert_eq!((a, b), (0.0, 0.0));

        let (a, b) = js_decomposition_check(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap();
        assert!((a - 2.0 * LN_2).abs() < 1e-12 && (b - 2.0 * LN_2).abs() < 1e-12);

        let (a, b) = js_decomposition_check(&dist(&[0.7, 0.3]), &dist(&[0.5, 0.5])).unwrap();
        assert!((a - b).abs() < 1e-10);
        assert!(a > 0.0);
    }

    #[test]
    fn kl_boundary_conventions() {
        let kl = FDivergenceKind::KullbackLeibler;
        // q misses an atom p charges: f(0) = ∞.
        assert_eq!(f_divergence(kl, &dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap(), f64::INFINITY);
        // q charges an atom p misses: f°(0) = 0.
        let d = f_divergence(kl, &dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])).unwrap();
        assert!((d - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ratio_map_examples() {
        assert_eq!(density_ratio_from_discriminator(0.5), 1.0);
        assert!((density_ratio_from_discriminator(0.8) - 0.25).abs() < 1e-12);
        assert!((density_ratio_from_discriminator(0.2) - 4.0).abs() < 1e-12);
        assert_eq!(density_ratio_from_discriminator(0.0), density_ratio_from_discriminator(1e-6));
        assert_eq!(density_ratio_from_discriminator(1.0), density_ratio_from_discriminator(1.0 - 1e-6));
    }

    #[test]
    fn generators_vanish_at_one() {
        for kind in FDivergenceKind::ALL {
            assert_eq!(kind.f(1.0), 0.0, "{kind:?}");
            assert_eq!(kind.f0(1.0), 0.0, "{kind:?}");
        }
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            f_divergence(FDivergenceKind::TotalVariation, &dist(&[1.0]), &dist(&[0.5, 0.5])),
            Err(Error::SupportMismatch { .. })
        ));
        assert!(DiscreteDistribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![-0.1, 1.1]).is_err());
    }
}
