//! Optimal next mixture components on finite supports.
//!
//! For a current model `P_g`, data distribution `P_d` and mixture weight `β`,
//! the component minimizing `D_f((1-β)P_g + βQ || P_d)` has masses
//! `(λ* p_d - (1-β) p_g)_+ / β`, and the component minimizing the surrogate
//! `D_f(P_g || (P_d - βQ)/(1-β))` has masses `(p_d - λ†(1-β) p_g)_+ / β`.
//! Both multipliers solve a piecewise-linear normalization equation, which is
//! inverted exactly here by walking the sorted breakpoints.

use serde::{Deserialize, Serialize};

use crate::divergence::{check_same_support, f_divergence, DiscreteDistribution, FDivergenceKind};
use crate::error::{check_unit_interval, Error, Result};

/// Tolerance used by the bisection oracle.
pub const BISECTION_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalTargetResult {
    pub lambda: f64,
    pub target: DiscreteDistribution,
    /// Atoms with positive target mass.
    pub active_set: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLambda {
    pub lambda: f64,
    /// Number of examples with positive weight.
    pub active_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub t: usize,
    /// `λ*` computed against this step's model.
    pub lambda: f64,
    /// `D_f(P^t || P_d)`.
    pub divergence: f64,
    pub model: DiscreteDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub beta: f64,
    pub kind: FDivergenceKind,
    pub steps: Vec<GreedyStep>,
}

impl GreedyTrace {
    /// Number of updates after which the divergence first drops to `tol`.
    pub fn updates_until(&self, tol: f64) -> Option<usize> {
        self.steps.iter().find(|s| s.divergence <= tol).map(|s| s.t - 1)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.lambda).collect()
    }
}

/// One term `mass · (λ - knot)_+` of a hinge sum. `offset` carries
/// `mass · knot` computed without the division that produced `knot`.
#[derive(Clone, Copy, Debug)]
struct Hinge {
    index: usize,
    mass: f64,
    knot: f64,
    offset: f64,
}

/// Solves `Σ mass_i (λ - knot_i)_+ = target` for `target > 0`, all masses
/// positive. Atoms with equal knots enter together. Returns `λ` and the number
/// of atoms strictly below it.
fn invert_hinge_sum(hinges: &mut [Hinge], target: f64) -> (f64, usize) {
    hinges.sort_by(|a, b| a.knot.total_cmp(&b.knot));
    let mut mass = 0.0;
    let mut offset = 0.0;
    let mut start = 0;
    while start < hinges.len() {
        let knot = hinges[start].knot;
        let mut end = start;
        while end < hinges.len() && hinges[end].knot == knot {
            mass += hinges[end].mass;
            offset += hinges[end].offset;
            end += 1;
        }
        let lambda = (target + offset) / mass;
        let next = hinges.get(end).map_or(f64::INFINITY, |h| h.knot);
        if lambda <= next {
            return (lambda, end);
        }
        start = end;
    }
    unreachable!("the hinge sum is unbounded, so some segment reaches the target")
}

fn hinge_sum(hinges: &[Hinge], lambda: f64) -> f64 {
    hinges
        .iter()
        .map(|h| (h.mass * lambda - h.offset).max(0.0))
        .sum()
}

/// Bisection for `Σ mass_i (λ - knot_i)_+ = target`, used to cross-check
/// the exact inversion.
fn bisect_hinge_sum(hinges: &[Hinge], target: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hinge_sum(hinges, hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > BISECTION_TOLERANCE * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if hinge_sum(hinges, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn discrete_hinges(beta: f64, p_d: &[f64], p_g: &[f64]) -> Vec<Hinge> {
    p_d.iter()
        .zip(p_g)
        .enumerate()
        .filter(|(_, (&d, _))| d > 0.0)
        .map(|(index, (&d, &g))| {
            let offset = (1.0 - beta) * g;
            Hinge {
                index,
                mass: d,
                knot: offset / d,
                offset,
            }
        })
        .collect()
}

fn empirical_hinges(beta: f64, p: &[f64], h: &[f64]) -> Vec<Hinge> {
    p.iter()
        .zip(h)
        .enumerate()
        .filter(|(_, (&pi, _))| pi > 0.0)
        .map(|(index, (&pi, &hi))| {
            let knot = if beta == 1.0 { 0.0 } else { (1.0 - beta) * hi };
            Hinge {
                index,
                mass: pi,
                knot,
                offset: pi * knot,
            }
        })
        .collect()
}

/// `g(λ) = Σ (λ p_d - (1-β) p_g)_+`.
pub fn g_lambda(lambda: f64, beta: f64, p_d: &DiscreteDistribution, p_g: &DiscreteDistribution) -> Result<f64> {
    check_unit_interval("beta", beta)?;
    check_same_support(p_d, p_g)?;
    Ok(p_d
        .masses()
        .iter()
        .zip(p_g.masses())
        .map(|(d, g)| (lambda * d - (1.0 - beta) * g).max(0.0))
        .sum())
}

fn target_from_masses(raw: Vec<f64>) -> Result<(DiscreteDistribution, Vec<usize>)> {
    let active_set = raw
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok((DiscreteDistribution::from_weights(&raw)?, active_set))
}

/// `Q*_β` and its multiplier `λ*`.
pub fn solve_lambda_star(
    beta: f64,
    p_d: &DiscreteDistribution,
    p_g: &DiscreteDistribution,
) -> Result<OptimalTargetResult> {
    check_unit_interval("beta", beta)?;
    check_same_support(p_d, p_g)?;
    let (d, g) = (p_d.masses(), p_g.masses());

    let covered = d.iter().zip(g).all(|(di, gi)| (1.0 - beta) * gi <= *di);
    let lambda = if covered {
        1.0
    } else {
        let mut hinges = discrete_hinges(beta, d, g);
        invert_hinge_sum(&mut hinges, beta).0
    };

    let raw = d
        .iter()
        .zip(g)
        .map(|(di, gi)| (lambda * di - (1.0 - beta) * gi).max(0.0) / beta)
        .collect();
    let (target, active_set) = target_from_masses(raw)?;
    Ok(OptimalTargetResult {
        lambda,
        target,
        active_set,
    })
}

/// `λ*` by bisection on `g(λ) = β`; an oracle independent of the breakpoint walk.
pub fn lambda_star_bisection(beta: f64, p_d: &DiscreteDistribution, p_g: &DiscreteDistribution) -> Result<f64> {
    check_unit_interval("beta", beta)?;
    check_same_support(p_d, p_g)?;
    let hinges = discrete_hinges(beta, p_d.masses(), p_g.masses());
    Ok(bisect_hinge_sum(&hinges, beta))
}

/// `Q†_β` and its multiplier `λ† ≥ 1`.
///
/// Requires `P_d(dP_g = 0) < β`. For `β = 1` the surrogate is degenerate and
/// `λ† = 1`, `Q† = P_d` is returned.
pub fn solve_lambda_dagger(
    beta: f64,
    p_d: &DiscreteDistribution,
    p_g: &DiscreteDistribution,
) -> Result<OptimalTargetResult> {
    check_unit_interval("beta", beta)?;
    check_same_support(p_d, p_g)?;
    let (d, g) = (p_d.masses(), p_g.masses());

    let delta: f64 = d.iter().zip(g).filter(|(_, gi)| **gi == 0.0).map(|(di, _)| di).sum();
    if delta >= beta {
        return Err(Error::Infeasible { delta, beta });
    }
    if beta == 1.0 {
        return Ok(OptimalTargetResult {
            lambda: 1.0,
            target: p_d.clone(),
            active_set: (0..d.len()).filter(|&i| d[i] > 0.0).collect(),
        });
    }

    // Atom i stays active while λ < p_d_i / ((1-β) p_g_i); walk knots downward.
    let mut knots: Vec<(f64, f64, f64)> = d
        .iter()
        .zip(g)
        .filter(|(_, gi)| **gi > 0.0)
        .map(|(&di, &gi)| {
            let slope = (1.0 - beta) * gi;
            (di / slope, di, slope)
        })
        .collect();
    knots.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut mass = delta;
    let mut slope = 0.0;
    let mut lambda = f64::NAN;
    let mut start = 0;
    while start < knots.len() {
        let knot = knots[start].0;
        let mut end = start;
        while end < knots.len() && knots[end].0 == knot {
            mass += knots[end].1;
            slope += knots[end].2;
            end += 1;
        }
        let candidate = (mass - beta) / slope;
        let next = knots.get(end).map_or(0.0, |k| k.0);
        if candidate >= next {
            lambda = candidate;
            break;
        }
        start = end;
    }
    debug_assert!(lambda.is_finite());

    let raw = d
        .iter()
        .zip(g)
        .map(|(di, gi)| (di - lambda * (1.0 - beta) * gi).max(0.0) / beta)
        .collect();
    let (target, active_set) = target_from_masses(raw)?;
    Ok(OptimalTargetResult {
        lambda,
        target,
        active_set,
    })
}

/// Iterates `P^{t+1} = (1-β) P^t + β Q*_β(P^t)` and records the divergence
/// to `p_d` at every step `t = 1..=steps`.
pub fn greedy_optimal_iteration(
    p_d: &DiscreteDistribution,
    p_1: &DiscreteDistribution,
    beta: f64,
    steps: usize,
    kind: FDivergenceKind,
) -> Result<GreedyTrace> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain {
            name: "beta",
            value: beta,
            domain: "(0, 1)",
        });
    }
    check_same_support(p_d, p_1)?;

    let mut model = p_1.clone();
    let mut records = Vec::with_capacity(steps);
    for t in 1..=steps {
        let divergence = f_divergence(kind, &model, p_d)?;
        let lambda = solve_lambda_star(beta, p_d, &model)?.lambda;
        // (1-β)P + βQ* written as the pointwise max; exact once λ* = 1.
        let next: Vec<f64> = p_d
            .masses()
            .iter()
            .zip(model.masses())
            .map(|(d, m)| (lambda * d).max((1.0 - beta) * m))
            .collect();
        records.push(GreedyStep {
            t,
            lambda,
            divergence,
            model,
        });
        model = DiscreteDistribution::from_weights(&next)?;
    }
    Ok(GreedyTrace {
        beta,
        kind,
        steps: records,
    })
}

/// Upper bound on the number of greedy updates before the model equals
/// `p_d`, or `None` when `p_1` charges an atom outside the support of `p_d`.
pub fn finite_convergence_bound(
    p_d: &DiscreteDistribution,
    p_1: &DiscreteDistribution,
    beta: f64,
) -> Result<Option<usize>> {
    check_unit_interval("beta", beta)?;
    check_same_support(p_d, p_1)?;
    let mut ratio_bound: f64 = 0.0;
    for (&d, &p) in p_d.masses().iter().zip(p_1.masses()) {
        if d > 0.0 {
            ratio_bound = ratio_bound.max((1.0 - beta) * p / d);
        } else if p > 0.0 && beta < 1.0 {
            return Ok(None);
        }
    }
    if ratio_bound <= 1.0 || beta == 1.0 {
        return Ok(Some(1));
    }
    let extra = ratio_bound.ln() / -(1.0 - beta).ln();
    Ok(Some((1.0 + extra).ceil() as usize))
}

fn validate_empirical(beta: f64, p: &[f64], h: &[f64]) -> Result<()> {
    check_unit_interval("beta", beta)?;
    if p.len() != h.len() {
        return Err(Error::SupportMismatch {
            left: p.len(),
            right: h.len(),
        });
    }
    if let Some(i) = p.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Validation(format!("p[{i}] = {} is not a valid weight", p[i])));
    }
    if let Some(i) = h.iter().position(|x| x.is_nan() || *x < 0.0) {
        return Err(Error::Validation(format!("h[{i}] = {} is not a valid ratio", h[i])));
    }
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Err(Error::Validation("all example weights are zero".into()));
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("example weights sum to {total}, not 1")));
    }
    Ok(())
}

/// `λ*` for empirical weights `p` and density-ratio estimates `h`: the value
/// for which `Σ (p_i/β)(λ - (1-β)h_i)_+ = 1`.
pub fn lambda_star_empirical(beta: f64, p: &[f64], h: &[f64]) -> Result<EmpiricalLambda> {
    validate_empirical(beta, p, h)?;
    let mut hinges = empirical_hinges(beta, p, h);
    let (lambda, active_count) = invert_hinge_sum(&mut hinges, beta);
    Ok(EmpiricalLambda { lambda, active_count })
}

/// Bisection counterpart of [`lambda_star_empirical`].
pub fn lambda_star_empirical_bisection(beta: f64, p: &[f64], h: &[f64]) -> Result<f64> {
    validate_empirical(beta, p, h)?;
    let hinges = empirical_hinges(beta, p, h);
    Ok(bisect_hinge_sum(&hinges, beta))
}

/// Indices of examples in the active set, i.e. with `λ > (1-β) h_i`.
pub fn empirical_active_set(beta: f64, p: &[f64], h: &[f64], lambda: f64) -> Vec<usize> {
    empirical_hinges(beta, p, h)
        .into_iter()
        .filter(|hinge| hinge.knot < lambda)
        .map(|hinge| hinge.index)
        .collect()
}
