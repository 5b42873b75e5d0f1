//! Smooth-data quantities on a finite neighborhood graph split into points the
//! weak labeler gets right (`good`) and wrong (`bad`).
//!
//! The draft lemmas chain strict inequalities that become equalities on
//! degenerate instances, so checks here are non-strict and equality is
//! reported separately.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{
    cond_prob, members, neighborhood, NeighborhoodGraph, PointSet, ENUMERATION_CAP,
};
use crate::rng::Rng;

const TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothDataSummary {
    /// `P(bad)`.
    pub alpha: f64,
    /// `max_x P(N(x)) / P(x)` over points with positive mass.
    pub s_h: f64,
    /// `P(N(bad) | good)`.
    pub rho: f64,
    /// `P(N(good) | bad)`.
    pub rho_prime: f64,
    pub q: f64,
    pub c_derived: f64,
}

/// `rho' - (1 - alpha)(1 - q) s_h / alpha`.
pub fn derived_c(rho_prime: f64, alpha: f64, q: f64, s_h: f64) -> f64 {
    rho_prime - (1.0 - alpha) * (1.0 - q) / alpha * s_h
}

fn check_partition(graph: &NeighborhoodGraph, good: PointSet, bad: PointSet) -> Result<f64> {
    if good & bad != 0 || (good | bad) != graph.all() {
        return Err(Error::InvalidInput(
            "good and bad must partition the points".into(),
        ));
    }
    let alpha = graph.prob(bad);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::UndefinedConditional(format!(
            "P(bad) = {alpha} is not in (0, 1)"
        )));
    }
    Ok(alpha)
}

pub fn s_h(graph: &NeighborhoodGraph) -> f64 {
    (0..graph.len())
        .filter(|&x| graph.mass()[x] > 0.0)
        .map(|x| graph.prob(graph.neighbors_of(x)) / graph.mass()[x])
        .fold(0.0, f64::max)
}

pub fn summarize(
    graph: &NeighborhoodGraph,
    good: PointSet,
    bad: PointSet,
    q: f64,
) -> Result<SmoothDataSummary> {
    let alpha = check_partition(graph, good, bad)?;
    let s_h = s_h(graph);
    let rho = cond_prob(graph, neighborhood(graph, bad), good)?;
    let rho_prime = cond_prob(graph, neighborhood(graph, good), bad)?;
    Ok(SmoothDataSummary {
        alpha,
        s_h,
        rho,
        rho_prime,
        q,
        c_derived: derived_c(rho_prime, alpha, q, s_h),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedExpansionReport {
    pub summary: SmoothDataSummary,
    /// `c_derived <= 0`: every probability clears the bound.
    pub vacuous: bool,
    pub checked: usize,
    /// Smallest `P(N(U)|bad) - c P(U|good)` over checked sets.
    pub min_margin: f64,
    /// A set with `P(N(U)|bad) < c P(U|good)`.
    pub witness: Option<PointSet>,
    /// Some checked set meets the bound with equality.
    pub boundary: bool,
    pub holds: bool,
}

/// `(c_derived, q)`-expansion on `(bad, good)` by enumerating every `U ⊆ good`.
pub fn verify_derived_expansion(
    graph: &NeighborhoodGraph,
    good: PointSet,
    bad: PointSet,
    q: f64,
) -> Result<DerivedExpansionReport> {
    let summary = summarize(graph, good, bad, q)?;
    let pts: Vec<usize> = members(good).collect();
    if pts.len() > ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            size: pts.len(),
            cap: ENUMERATION_CAP,
        });
    }
    let c = summary.c_derived;
    let mut rep = DerivedExpansionReport {
        summary,
        vacuous: c <= 0.0,
        checked: 0,
        min_margin: f64::INFINITY,
        witness: None,
        boundary: false,
        holds: true,
    };
    for m in 0u64..(1 << pts.len()) {
        let u = members(m).fold(0, |s, j| s | (1 << pts[j]));
        let pu = cond_prob(graph, u, good)?;
        if pu <= q {
            continue;
        }
        rep.checked += 1;
        let margin = cond_prob(graph, neighborhood(graph, u), bad)? - c * pu;
        rep.min_margin = rep.min_margin.min(margin);
        if margin.abs() <= TOL {
            rep.boundary = true;
        } else if margin < 0.0 && rep.witness.is_none() {
            rep.witness = Some(u);
            rep.holds = false;
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseOverlapReport {
    /// `N(N(good) ∩ bad) ∩ good == N(bad) ∩ good`.
    pub identity_holds: bool,
    /// `P(N(good)|bad)`.
    pub lhs: f64,
    /// `P(N(bad)|good) (1 - alpha) / (s_h alpha)`.
    pub rhs: f64,
    pub inequality_holds: bool,
    /// `lhs == rhs`, where the strict form fails.
    pub boundary: bool,
}

pub fn verify_reverse_overlap(
    graph: &NeighborhoodGraph,
    good: PointSet,
    bad: PointSet,
) -> Result<ReverseOverlapReport> {
    let s = summarize(graph, good, bad, 0.0)?;
    if !(s.s_h > 0.0) {
        return Err(Error::UndefinedConditional(
            "s_h = 0 (no point has a neighbor with mass)".into(),
        ));
    }
    let left = neighborhood(graph, neighborhood(graph, good) & bad) & good;
    let right = neighborhood(graph, bad) & good;
    let lhs = s.rho_prime;
    let rhs = s.rho * (1.0 - s.alpha) / (s.s_h * s.alpha);
    Ok(ReverseOverlapReport {
        identity_holds: left == right,
        lhs,
        rhs,
        inequality_holds: lhs >= rhs - TOL,
        boundary: (lhs - rhs).abs() <= TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    /// `q = (3/4)(1 - 2 alpha)`, the value the theorem fixes.
    pub q_fixed: f64,
    /// `alpha (1 - 3/2 rho' + 3 (1 - alpha)(1 - q_fixed) s_h / (2 alpha))`.
    pub correction: f64,
    /// Bound on `R_D(f) - R^_D(f)`: `2 alpha / (1 - 2 alpha) m + correction`.
    pub rhs_bound: f64,
    /// `alpha - rhs_bound`; positive means better than the trivial bound.
    pub trivial_bound_margin: f64,
    /// `4 m / (3 (1 - 2 alpha)) + (1 - alpha)(1 - q_fixed) s_h / alpha`.
    pub threshold: f64,
    pub improves: bool,
    /// The same condition evaluated with the summary's own `q`.
    pub threshold_with_summary_q: f64,
    pub improves_with_summary_q: bool,
}

/// Whether the smooth-data bound beats the trivial `R^_D(f) + alpha`, given
/// `robustness_mass = P(f not robust | D)`.
pub fn bound_improvement_condition(
    summary: &SmoothDataSummary,
    robustness_mass: f64,
) -> Result<ImprovementReport> {
    let a = summary.alpha;
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::OutOfRegime(format!(
            "alpha = {a} must lie in (0, 0.5)"
        )));
    }
    let q_fixed = 0.75 * (1.0 - 2.0 * a);
    let correction = a
        * (1.0 - 1.5 * summary.rho_prime
            + 3.0 * (1.0 - a) * (1.0 - q_fixed) / (2.0 * a) * summary.s_h);
    let rhs_bound = 2.0 * a / (1.0 - 2.0 * a) * robustness_mass + correction;
    let robust_term = 4.0 / (3.0 * (1.0 - 2.0 * a)) * robustness_mass;
    let threshold = robust_term + (1.0 - a) * (1.0 - q_fixed) / a * summary.s_h;
    let threshold_with_summary_q = robust_term + (1.0 - a) * (1.0 - summary.q) / a * summary.s_h;
    Ok(ImprovementReport {
        q_fixed,
        correction,
        rhs_bound,
        trivial_bound_margin: a - rhs_bound,
        threshold,
        improves: summary.rho_prime > threshold,
        threshold_with_summary_q,
        improves_with_summary_q: summary.rho_prime > threshold_with_summary_q,
    })
}

/// Random graph with a random nonempty good/bad split.
pub fn random_split(
    rng: &mut Rng,
    min_points: usize,
    max_points: usize,
) -> Result<(NeighborhoodGraph, PointSet, PointSet)> {
    loop {
        let inst = crate::expansion::random_instance(rng, min_points, max_points, 0.0)?;
        let g = inst.graph;
        let bad_p = rng.random_range(0.1..0.6);
        let bad: PointSet = (0..g.len())
            .filter(|_| rng.random::<f64>() < bad_p)
            .fold(0, |s, x| s | (1 << x));
        let good = g.all() & !bad;
        if bad != 0 && good != 0 {
            return Ok((g, good, bad));
        }
    }
}
