//! Exact expansion, robustness and pseudolabel-correction checks on small
//! finite probability spaces.
//!
//! Point sets are bitmasks over at most 64 points. Every quantity is computed
//! by enumeration, so these routines serve as oracles rather than estimators.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Label, Region};
use crate::rng::Rng;

pub type PointSet = u64;

/// Largest number of free points enumerated exactly.
pub const ENUMERATION_CAP: usize = 20;
pub const MAX_POINTS: usize = 64;

const WEIGHT_RTOL: f64 = 1e-12;

pub fn set_from(points: &[usize]) -> PointSet {
    points.iter().fold(0, |s, &i| s | (1 << i))
}

pub fn members(s: PointSet) -> impl Iterator<Item = usize> {
    (0..MAX_POINTS).filter(move |&i| s >> i & 1 == 1)
}

pub fn size(s: PointSet) -> usize {
    s.count_ones() as usize
}

/// Finite space with point masses and a symmetric neighborhood relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodGraph {
    mass: Vec<f64>,
    /// `nbr[x]` is the set `N(x)`.
    nbr: Vec<PointSet>,
}

impl NeighborhoodGraph {
    pub fn new(mass: Vec<f64>, adjacency: &[Vec<bool>]) -> Result<Self> {
        let n = mass.len();
        if n == 0 || n > MAX_POINTS {
            return Err(Error::InvalidInput(format!(
                "graph needs 1..={MAX_POINTS} points, got {n}"
            )));
        }
        if mass.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidInput(
                "masses must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("masses sum to {total}, not 1")));
        }
        if adjacency.len() != n || adjacency.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                got: adjacency.len(),
            });
        }
        let mut nbr = vec![0; n];
        for x in 0..n {
            for y in 0..n {
                if adjacency[x][y] != adjacency[y][x] {
                    return Err(Error::InvalidInput(format!(
                        "adjacency not symmetric at ({x}, {y})"
                    )));
                }
                if adjacency[x][y] {
                    nbr[x] |= 1 << y;
                }
            }
        }
        Ok(NeighborhoodGraph { mass, nbr })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn all(&self) -> PointSet {
        if self.len() == 64 {
            u64::MAX
        } else {
            (1 << self.len()) - 1
        }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn neighbors_of(&self, x: usize) -> PointSet {
        self.nbr[x]
    }

    pub fn adjacent(&self, x: usize, y: usize) -> bool {
        self.nbr[x] >> y & 1 == 1
    }

    pub fn prob(&self, s: PointSet) -> f64 {
        members(s & self.all()).map(|i| self.mass[i]).sum()
    }

    /// `w(x, x') = P(x) P(x') 1[x in N(x')]`.
    pub fn edge_weight(&self, x: usize, y: usize) -> f64 {
        if self.adjacent(x, y) {
            self.mass[x] * self.mass[y]
        } else {
            0.0
        }
    }

    /// `w(V, U)`, summed over ordered pairs.
    pub fn weight(&self, v: PointSet, u: PointSet) -> f64 {
        members(v)
            .map(|x| members(u).map(|y| self.edge_weight(x, y)).sum::<f64>())
            .sum()
    }

    /// `w(x, U)` for each point.
    fn point_weights(&self, u: PointSet) -> Vec<f64> {
        (0..self.len())
            .map(|x| members(u).map(|y| self.edge_weight(x, y)).sum())
            .collect()
    }
}

pub fn neighborhood(graph: &NeighborhoodGraph, u: PointSet) -> PointSet {
    members(u).fold(0, |acc, x| acc | graph.nbr[x])
}

/// `P(U | A) = P(U ∩ A) / P(A)`.
pub fn cond_prob(graph: &NeighborhoodGraph, u: PointSet, a: PointSet) -> Result<f64> {
    let pa = graph.prob(a);
    if pa <= 0.0 {
        return Err(Error::UndefinedConditional(format!("set {a:#b}")));
    }
    Ok(graph.prob(u & a) / pa)
}

fn cond_named(graph: &NeighborhoodGraph, u: PointSet, a: PointSet, name: &str) -> Result<f64> {
    let pa = graph.prob(a);
    if pa <= 0.0 {
        return Err(Error::UndefinedConditional(name.into()));
    }
    Ok(graph.prob(u & a) / pa)
}

/// `r(f, x) = P(f(x') != f(x) | x' in N(x))`; 0 when `N(x)` has no mass.
pub fn robustness(graph: &NeighborhoodGraph, f: &[Label], x: usize) -> f64 {
    let n = graph.nbr[x];
    let pn = graph.prob(n);
    if pn <= 0.0 {
        return 0.0;
    }
    members(n)
        .filter(|&y| f[y] != f[x])
        .map(|y| graph.mass[y])
        .sum::<f64>()
        / pn
}

/// `R_eta(f) = {x : r(f, x) <= eta}`.
pub fn robust_set(graph: &NeighborhoodGraph, f: &[Label], eta: f64) -> PointSet {
    (0..graph.len())
        .filter(|&x| robustness(graph, f, x) <= eta)
        .fold(0, |s, x| s | (1 << x))
}

/// Points whose neighborhood carries no mass, where robustness is vacuous.
pub fn vacuous_points(graph: &NeighborhoodGraph) -> PointSet {
    (0..graph.len())
        .filter(|&x| graph.prob(graph.nbr[x]) <= 0.0)
        .fold(0, |s, x| s | (1 << x))
}

/// `P_{1-eta}(U, A) = min { P(V|A) : w(V, U) >= (1 - eta) w(N(U), U) }`.
///
/// Only points with `w(x, U) > 0` can help; those outside `A` cost nothing and
/// are always taken, so the search runs over subsets of the support inside `A`.
pub fn robust_neighborhood_size(
    graph: &NeighborhoodGraph,
    u: PointSet,
    a: PointSet,
    eta: f64,
) -> Result<f64> {
    let pa = graph.prob(a);
    if pa <= 0.0 {
        return Err(Error::UndefinedConditional(format!("set {a:#b}")));
    }
    let pw = graph.point_weights(u);
    let support: PointSet = (0..graph.len())
        .filter(|&x| pw[x] > 0.0)
        .fold(0, |s, x| s | (1 << x));
    let total: f64 = members(support).map(|x| pw[x]).sum();
    let target = (1.0 - eta) * total;
    if target <= 0.0 {
        return Ok(0.0);
    }
    let free_weight: f64 = members(support & !a).map(|x| pw[x]).sum();
    let need = target - free_weight - WEIGHT_RTOL * total;
    if need <= 0.0 {
        return Ok(0.0);
    }
    if eta <= 0.0 {
        return Ok(graph.prob(support & a) / pa);
    }
    let cand: Vec<usize> = members(support & a).collect();
    if cand.len() > ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            size: cand.len(),
            cap: ENUMERATION_CAP,
        });
    }
    let k = cand.len();
    let mut w = vec![0.0; 1 << k];
    let mut p = vec![0.0; 1 << k];
    let mut best = f64::INFINITY;
    for mask in 1usize..(1 << k) {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        w[mask] = w[rest] + pw[cand[low]];
        p[mask] = p[rest] + graph.mass[cand[low]];
        if w[mask] >= need && p[mask] < best {
            best = p[mask];
        }
    }
    Ok(best / pa)
}

/// Which sets `U` an expansion check ranges over.
#[derive(Debug, Clone, PartialEq)]
pub enum SetFamily {
    AllSubsets,
    Explicit(Vec<PointSet>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub c: f64,
    pub q: f64,
    pub eta: f64,
    /// Sets with `P(U|B) > q` that were tested.
    pub checked: usize,
    /// `P_{1-eta}(U, A)` and `c P(U|B)` at the tightest tested set.
    pub lhs: f64,
    pub rhs: f64,
    pub witness: Option<PointSet>,
    pub holds: bool,
}

fn family_sets(b: PointSet, family: &SetFamily) -> Result<Vec<PointSet>> {
    match family {
        SetFamily::AllSubsets => {
            let pts: Vec<usize> = members(b).collect();
            if pts.len() > ENUMERATION_CAP {
                return Err(Error::CapExceeded {
                    size: pts.len(),
                    cap: ENUMERATION_CAP,
                });
            }
            Ok((0u64..(1 << pts.len()))
                .map(|m| members(m).fold(0, |s, j| s | (1 << pts[j])))
                .collect())
        }
        SetFamily::Explicit(sets) => {
            if let Some(bad) = sets.iter().find(|&&u| u & !b != 0) {
                return Err(Error::InvalidInput(format!(
                    "family set {bad:#b} is not a subset of B"
                )));
            }
            Ok(sets.clone())
        }
    }
}

/// `(c, q, eta)`-robust expansion of a family on `(A, B)`.
pub fn check_expansion(
    graph: &NeighborhoodGraph,
    a: PointSet,
    b: PointSet,
    c: f64,
    q: f64,
    family: &SetFamily,
    eta: f64,
) -> Result<ExpansionReport> {
    let mut report = ExpansionReport {
        c,
        q,
        eta,
        checked: 0,
        lhs: f64::NAN,
        rhs: f64::NAN,
        witness: None,
        holds: true,
    };
    let mut tightest = f64::INFINITY;
    for u in family_sets(b, family)? {
        let pub_ = cond_prob(graph, u, b)?;
        if pub_ <= q {
            continue;
        }
        report.checked += 1;
        let lhs = robust_neighborhood_size(graph, u, a, eta)?;
        let rhs = c * pub_;
        if lhs - rhs < tightest {
            tightest = lhs - rhs;
            report.lhs = lhs;
            report.rhs = rhs;
        }
        if !(lhs > rhs) && report.witness.is_none() {
            report.witness = Some(u);
            report.holds = false;
            report.lhs = lhs;
            report.rhs = rhs;
            tightest = f64::NEG_INFINITY;
        }
    }
    Ok(report)
}

/// `inf_U P_{1-eta}(U, A) / P(U|B)` over family sets above `q`: expansion holds
/// for every `c` strictly below it. Infinite when no set is above `q`.
pub fn expansion_ratio(
    graph: &NeighborhoodGraph,
    a: PointSet,
    b: PointSet,
    q: f64,
    family: &SetFamily,
    eta: f64,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    for u in family_sets(b, family)? {
        let pub_ = cond_prob(graph, u, b)?;
        if pub_ > q {
            best = best.min(robust_neighborhood_size(graph, u, a, eta)? / pub_);
        }
    }
    Ok(best)
}

/// Supremum of admissible `c` located by bisection on [`check_expansion`].
pub fn optimal_c_bisection(
    graph: &NeighborhoodGraph,
    a: PointSet,
    b: PointSet,
    q: f64,
    family: &SetFamily,
    eta: f64,
) -> Result<f64> {
    let holds = |c: f64| check_expansion(graph, a, b, c, q, family, eta).map(|r| r.holds);
    let mut hi = 1.0;
    while holds(hi)? {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = 0.0;
    if !holds(lo)? {
        return Ok(0.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Ground truth, weak labels (None = abstain), a candidate classifier and
/// region tags over the points of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub graph: NeighborhoodGraph,
    pub y: Vec<Label>,
    pub y_tilde: Vec<Option<Label>>,
    pub f: Vec<Label>,
    pub region: Vec<Region>,
}

/// Named subsets of an instance for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassSets {
    pub s: PointSet,
    pub t: PointSet,
    pub good: PointSet,
    pub bad: PointSet,
    pub easy: PointSet,
    pub hard: PointSet,
    pub overlap: PointSet,
    /// Points where `f` differs from the weak label (abstentions excluded).
    pub f_ne_weak: PointSet,
    pub f_ne_y: PointSet,
}

impl LabeledInstance {
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.len();
        for (name, len) in [
            ("y", self.y.len()),
            ("y_tilde", self.y_tilde.len()),
            ("f", self.f.len()),
            ("region", self.region.len()),
        ] {
            if len != n {
                return Err(Error::InvalidInput(format!(
                    "{name} has {len} entries for {n} points"
                )));
            }
        }
        Ok(())
    }

    fn mask(&self, pred: impl Fn(usize) -> bool) -> PointSet {
        (0..self.graph.len())
            .filter(|&i| pred(i))
            .fold(0, |s, i| s | (1 << i))
    }

    pub fn class_sets(&self, class: Label) -> ClassSets {
        let s = self.mask(|i| self.y[i] == class && self.y_tilde[i].is_some());
        let t = self.mask(|i| self.y[i] == class && self.y_tilde[i].is_none());
        let good = s & self.mask(|i| self.y_tilde[i] == Some(self.y[i]));
        ClassSets {
            s,
            t,
            good,
            bad: s & !good,
            easy: self.mask(|i| self.region[i] == Region::EasyOnly),
            hard: self.mask(|i| self.region[i] == Region::HardOnly),
            overlap: self.mask(|i| self.region[i] == Region::Overlap),
            f_ne_weak: self.mask(|i| self.y_tilde[i].is_some_and(|w| w != self.f[i])),
            f_ne_y: self.mask(|i| self.f[i] != self.y[i]),
        }
    }

    /// `(eps1, eps2)`: weak-label error on the overlap and hard parts of `S_i`.
    pub fn weak_errors(&self, class: Label) -> Result<(f64, f64)> {
        let k = self.class_sets(class);
        Ok((
            cond_named(&self.graph, k.bad, k.s & k.overlap, "S_i ∩ D_overlap")?,
            cond_named(&self.graph, k.bad, k.s & k.hard, "S_i ∩ D_hard")?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub name: String,
    pub failed_hypotheses: Vec<String>,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when a hypothesis failed and the bound was not asserted.
    pub holds: Option<bool>,
    /// The bound is met with equality (up to rounding).
    pub tight: bool,
}

impl TheoremReport {
    fn new(name: &str, failed: Vec<String>, lhs: f64, rhs: f64) -> Self {
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        let holds = failed.is_empty().then_some(lhs <= rhs + 1e-12 * scale);
        TheoremReport {
            name: name.into(),
            failed_hypotheses: failed,
            lhs,
            rhs,
            holds,
            tight: (lhs - rhs).abs() <= 1e-12 * scale,
        }
    }

    pub fn hypotheses_hold(&self) -> bool {
        self.failed_hypotheses.is_empty()
    }

    pub fn violated(&self) -> bool {
        self.holds == Some(false)
    }
}

/// Pseudolabel correction on the hard part of `S_i`.
///
/// Hypotheses: `0 < eps1 <= eps2 <= 1/2`, `c > 0`, `eta >= 0`; the robust
/// non-mistake set of `f` in `S_i^good ∩ D_overlap` expands onto
/// `S_i^bad ∩ D_hard`; and `f` disagrees with the weak labels or is not robust
/// on at most `1 - q - eps1` of `S_i ∩ D_overlap`.
pub fn verify_pseudolabel_correction(
    inst: &LabeledInstance,
    class: Label,
    c: f64,
    q: f64,
    eta: f64,
) -> Result<TheoremReport> {
    inst.validate()?;
    let g = &inst.graph;
    let k = inst.class_sets(class);
    let (eps1, eps2) = inst.weak_errors(class)?;
    let s_ov = k.s & k.overlap;
    let s_hard = k.s & k.hard;
    let good_ov = k.good & k.overlap;
    let bad_hard = k.bad & k.hard;
    let robust = robust_set(g, &inst.f, eta);

    let mut failed = Vec::new();
    if !(eps1 > 0.0 && eps1 <= eps2 && eps2 <= 0.5) {
        failed.push(format!(
            "need 0 < eps1 <= eps2 <= 0.5, got eps1 = {eps1}, eps2 = {eps2}"
        ));
    }
    if !(c > 0.0) || !(eta >= 0.0) {
        failed.push(format!("need c > 0 and eta >= 0, got c = {c}, eta = {eta}"));
    }
    if g.prob(good_ov) <= 0.0 {
        return Err(Error::UndefinedConditional("S_i^good ∩ D_overlap".into()));
    }
    if g.prob(bad_hard) > 0.0 {
        let v = robust & good_ov & !k.f_ne_y;
        let exp = check_expansion(
            g,
            bad_hard,
            good_ov,
            c,
            q,
            &SetFamily::Explicit(vec![v]),
            eta,
        )?;
        if !exp.holds {
            failed.push(format!(
                "robust expansion fails: P_(1-eta) = {} <= {}",
                exp.lhs, exp.rhs
            ));
        }
    } else {
        failed.push("S_i^bad ∩ D_hard has no mass".into());
    }
    let off = cond_named(g, k.f_ne_weak | !robust, s_ov, "S_i ∩ D_overlap")?;
    if off > 1.0 - q - eps1 {
        failed.push(format!(
            "P(f != weak or not robust | S_i ∩ D_overlap) = {off} > 1 - q - eps1 = {}",
            1.0 - q - eps1
        ));
    }

    let lhs = cond_named(g, k.f_ne_y, s_hard, "S_i ∩ D_hard")?;
    let rhs = cond_prob(g, k.f_ne_weak, s_hard)? + eps2
        - 2.0
            * c
            * eps2
            * (1.0 - cond_prob(g, k.f_ne_weak, good_ov)? - cond_prob(g, !robust, good_ov)?);
    Ok(TheoremReport::new(
        "pseudolabel_correction",
        failed,
        lhs,
        rhs,
    ))
}

/// Which set the coverage hypothesis expands onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageSource {
    /// `S_i^good ∩ D_overlap`, the set the argument actually uses.
    GoodOverlap,
    /// `S_i^good`, as the hypothesis is literally phrased.
    Good,
}

/// Coverage expansion onto the uncovered hard part `T_i ∩ D_hard`.
pub fn verify_coverage_expansion(
    inst: &LabeledInstance,
    class: Label,
    c: f64,
    q: f64,
    eta: f64,
    source: CoverageSource,
) -> Result<TheoremReport> {
    inst.validate()?;
    let g = &inst.graph;
    let k = inst.class_sets(class);
    let t_hard = k.t & k.hard;
    let s_ov = k.s & k.overlap;
    let a = match source {
        CoverageSource::GoodOverlap => k.good & k.overlap,
        CoverageSource::Good => k.good,
    };
    let robust = robust_set(g, &inst.f, eta);
    let eps1 = cond_named(g, k.bad, s_ov, "S_i ∩ D_overlap")?;

    let mut failed = Vec::new();
    if !(c > 0.0) || !(eta >= 0.0) {
        failed.push(format!("need c > 0 and eta >= 0, got c = {c}, eta = {eta}"));
    }
    if !(eps1 < 1.0) {
        failed.push("weak labels are all wrong on S_i ∩ D_overlap".into());
    }
    if g.prob(a) > 0.0 {
        let u = robust & k.f_ne_y & t_hard;
        let exp = check_expansion(g, a, t_hard, c, q, &SetFamily::Explicit(vec![u]), eta)?;
        if !exp.holds {
            failed.push(format!(
                "robust expansion fails: P_(1-eta) = {} <= {}",
                exp.lhs, exp.rhs
            ));
        }
    } else {
        failed.push("expansion source set has no mass".into());
    }
    let lhs = cond_named(g, k.f_ne_y, t_hard, "T_i ∩ D_hard")?;
    let err_weak = cond_prob(g, k.f_ne_weak, s_ov)?;
    let rhs = cond_prob(g, !robust, t_hard)? + q.max(err_weak / (c * (1.0 - eps1)));
    let name = match source {
        CoverageSource::GoodOverlap => "coverage_expansion",
        CoverageSource::Good => "coverage_expansion_literal",
    };
    Ok(TheoremReport::new(name, failed, lhs, rhs))
}

/// Mean neighbor disagreement `E_{x ~ D|A, x' ~ N(x)} [f(x) != f(x')]`.
pub fn mean_disagreement(graph: &NeighborhoodGraph, f: &[Label], a: PointSet) -> Result<f64> {
    let pa = graph.prob(a);
    if pa <= 0.0 {
        return Err(Error::UndefinedConditional("A".into()));
    }
    Ok(members(a)
        .map(|x| graph.mass[x] * robustness(graph, f, x))
        .sum::<f64>()
        / pa)
}

/// Markov step: mean disagreement at most `gamma` bounds the non-robust mass
/// of `A` by `gamma / eta`.
pub fn verify_markov_robustness(
    graph: &NeighborhoodGraph,
    f: &[Label],
    a: PointSet,
    gamma: f64,
    eta: f64,
) -> Result<TheoremReport> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be > 0, got {eta}")));
    }
    let e = mean_disagreement(graph, f, a)?;
    let mut failed = Vec::new();
    if e > gamma {
        failed.push(format!("mean disagreement {e} exceeds gamma {gamma}"));
    }
    let lhs = cond_prob(graph, !robust_set(graph, f, eta), a)?;
    Ok(TheoremReport::new(
        "markov_robustness",
        failed,
        lhs,
        gamma / eta,
    ))
}

/// Random instance: Erdős–Rényi neighborhoods, flat-Dirichlet masses and
/// uniform labels and regions. The weak labeler is more accurate off the hard
/// region; `f` copies the weak labels on covered overlap points with high
/// probability and otherwise mixes truth and weak labels.
pub fn random_instance(
    rng: &mut Rng,
    min_points: usize,
    max_points: usize,
    abstain_prob: f64,
) -> Result<LabeledInstance> {
    if min_points == 0 || min_points > max_points || max_points > MAX_POINTS {
        return Err(Error::InvalidInput(format!(
            "bad point range {min_points}..={max_points}"
        )));
    }
    let n = rng.random_range(min_points..=max_points);
    let edge_p = rng.random_range(0.2..0.9);
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i..n {
            let e = rng.random::<f64>() < edge_p;
            adj[i][j] = e;
            adj[j][i] = e;
        }
    }
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let mut mass: Vec<f64> = raw.iter().map(|m| m / total).collect();
    let drift = 1.0 - mass.iter().sum::<f64>();
    mass[0] += drift;
    let graph = NeighborhoodGraph::new(mass, &adj)?;
    let label = |rng: &mut Rng| {
        if rng.random::<bool>() {
            Label::Pos
        } else {
            Label::Neg
        }
    };
    let y: Vec<Label> = (0..n).map(|_| label(rng)).collect();
    let region: Vec<Region> = (0..n)
        .map(|_| Region::ALL[rng.random_range(0..3)])
        .collect();
    let acc_easy = rng.random_range(0.5..0.95);
    let acc_hard = rng.random_range(0.5..=acc_easy);
    let y_tilde: Vec<Option<Label>> = (0..n)
        .map(|i| {
            let acc = if region[i] == Region::HardOnly {
                acc_hard
            } else {
                acc_easy
            };
            if rng.random::<f64>() < abstain_prob {
                None
            } else if rng.random::<f64>() < acc {
                Some(y[i])
            } else {
                Some(y[i].flip())
            }
        })
        .collect();
    let follow_truth = rng.random_range(0.0..1.0);
    let copy_weak = rng.random_range(0.8..=1.0);
    let f: Vec<Label> = (0..n)
        .map(|i| match y_tilde[i] {
            Some(w) if region[i] == Region::Overlap && rng.random::<f64>() < copy_weak => w,
            w => {
                let base = if rng.random::<f64>() < follow_truth {
                    y[i]
                } else {
                    w.unwrap_or(y[i])
                };
                if rng.random::<f64>() < 0.1 {
                    base.flip()
                } else {
                    base
                }
            }
        })
        .collect();
    Ok(LabeledInstance {
        graph,
        y,
        y_tilde,
        f,
        region,
    })
}

pub const ETA_GRID: [f64; 4] = [0.0, 0.1, 0.25, 0.5];

/// Parameters drawn for a theorem check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckParams {
    pub class: Label,
    pub c: f64,
    pub q: f64,
    pub eta: f64,
}

/// Draw `(class, q, eta)` and a `c` strictly inside the admissible range for
/// the pseudolabel-correction hypothesis. The class is one where
/// `0 < eps1 <= eps2 <= 1/2` holds, if any.
pub fn draw_correction_params(
    inst: &LabeledInstance,
    rng: &mut Rng,
) -> Result<Option<CheckParams>> {
    let first = if rng.random::<bool>() {
        Label::Pos
    } else {
        Label::Neg
    };
    let eta = ETA_GRID[rng.random_range(0..ETA_GRID.len())];
    let g = &inst.graph;
    for class in [first, first.flip()] {
        let k = inst.class_sets(class);
        let (good_ov, bad_hard) = (k.good & k.overlap, k.bad & k.hard);
        if g.prob(good_ov) <= 0.0 || g.prob(bad_hard) <= 0.0 || g.prob(k.s & k.overlap) <= 0.0 {
            continue;
        }
        let (eps1, eps2) = inst.weak_errors(class)?;
        if !(eps1 > 0.0 && eps1 <= eps2 && eps2 <= 0.5) {
            continue;
        }
        // q no larger than the agreement hypothesis allows
        let off = cond_prob(
            g,
            k.f_ne_weak | !robust_set(g, &inst.f, eta),
            k.s & k.overlap,
        )?;
        let q_max = (1.0 - eps1 - off).min(0.5);
        if q_max < 0.0 {
            continue;
        }
        let q = rng.random_range(0.0..=q_max);
        let v = robust_set(g, &inst.f, eta) & good_ov & !k.f_ne_y;
        let c_star = expansion_ratio(g, bad_hard, good_ov, q, &SetFamily::Explicit(vec![v]), eta)?;
        let c = rng.random_range(0.01..1.0) * c_star.min(4.0);
        return Ok((c > 0.0).then_some(CheckParams { class, c, q, eta }));
    }
    Ok(None)
}

pub fn draw_coverage_params(
    inst: &LabeledInstance,
    rng: &mut Rng,
    source: CoverageSource,
) -> Result<Option<CheckParams>> {
    let class = if rng.random::<bool>() {
        Label::Pos
    } else {
        Label::Neg
    };
    let q = rng.random_range(0.0..0.5);
    let eta = ETA_GRID[rng.random_range(0..ETA_GRID.len())];
    let k = inst.class_sets(class);
    let g = &inst.graph;
    let a = match source {
        CoverageSource::GoodOverlap => k.good & k.overlap,
        CoverageSource::Good => k.good,
    };
    let t_hard = k.t & k.hard;
    if g.prob(a) <= 0.0 || g.prob(t_hard) <= 0.0 || g.prob(k.s & k.overlap) <= 0.0 {
        return Ok(None);
    }
    let u = robust_set(g, &inst.f, eta) & k.f_ne_y & t_hard;
    let c_star = expansion_ratio(g, a, t_hard, q, &SetFamily::Explicit(vec![u]), eta)?;
    let c = rng.random_range(0.01..1.0) * c_star.min(4.0);
    Ok((c > 0.0).then_some(CheckParams { class, c, q, eta }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn uniform_graph(n: usize, adj: impl Fn(usize, usize) -> bool) -> NeighborhoodGraph {
        let a: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| adj(i, j)).collect())
            .collect();
        NeighborhoodGraph::new(vec![1.0 / n as f64; n], &a).unwrap()
    }

    fn random_graph(rng: &mut Rng, n: usize) -> NeighborhoodGraph {
        random_instance(rng, n, n, 0.0).unwrap().graph
    }

    #[test]
    fn construction_rejects_asymmetry_and_bad_mass() {
        let adj = vec![vec![false, true], vec![false, false]];
        assert!(NeighborhoodGraph::new(vec![0.5, 0.5], &adj).is_err());
        let adj = vec![vec![false; 2]; 2];
        assert!(NeighborhoodGraph::new(vec![0.5, 0.6], &adj).is_err());
    }

    #[test]
    fn neighborhood_cases() {
        let g = uniform_graph(5, |_, _| true);
        assert_eq!(neighborhood(&g, 0), 0);
        assert_eq!(neighborhood(&g, set_from(&[2])), g.all());
        let mut rng = rng_for(1, &[]);
        for _ in 0..50 {
            let g = random_graph(&mut rng, 12);
            let u: PointSet = rng.random::<u64>() & g.all();
            let mut oracle = 0;
            for x in 0..12 {
                for y in 0..12 {
                    if u >> x & 1 == 1 && g.adjacent(x, y) {
                        oracle |= 1 << y;
                    }
                }
            }
            assert_eq!(neighborhood(&g, u), oracle);
        }
    }

    #[test]
    fn cond_prob_cases() {
        let g = uniform_graph(8, |_, _| false);
        let a = g.all();
        assert_eq!(cond_prob(&g, a, a).unwrap(), 1.0);
        assert_eq!(cond_prob(&g, set_from(&[0, 3]), a).unwrap(), 0.25);
        assert!(matches!(
            cond_prob(&g, a, 0),
            Err(Error::UndefinedConditional(_))
        ));
    }

    #[test]
    fn robustness_cases() {
        let g = uniform_graph(4, |i, j| i != j);
        let constant = vec![Label::Pos; 4];
        assert!((0..4).all(|x| robustness(&g, &constant, x) == 0.0));
        assert_eq!(robust_set(&g, &constant, 0.0), g.all());
        let star = uniform_graph(4, |i, j| (i == 0) != (j == 0));
        let f = vec![Label::Neg, Label::Pos, Label::Pos, Label::Pos];
        assert_eq!(robustness(&star, &f, 0), 1.0);
        let isolated = uniform_graph(3, |_, _| false);
        assert_eq!(robustness(&isolated, &f[..3], 1), 0.0);
        assert_eq!(vacuous_points(&isolated), isolated.all());
    }

    #[test]
    fn robustness_matches_weighted_count() {
        let mut rng = rng_for(2, &[]);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 10, 10, 0.0).unwrap();
            let g = &inst.graph;
            for x in 0..10 {
                let (mut num, mut den) = (0.0, 0.0);
                for y in 0..10 {
                    if g.adjacent(x, y) {
                        den += g.mass()[y];
                        if inst.f[y] != inst.f[x] {
                            num += g.mass()[y];
                        }
                    }
                }
                let expect = if den > 0.0 { num / den } else { 0.0 };
                assert!((robustness(g, &inst.f, x) - expect).abs() < 1e-12);
            }
        }
    }

    /// Every subset of the positive-weight support.
    fn robust_size_oracle(g: &NeighborhoodGraph, u: PointSet, a: PointSet, eta: f64) -> f64 {
        let support: Vec<usize> = (0..g.len())
            .filter(|&x| g.weight(1 << x, u) > 0.0)
            .collect();
        let full = g.weight(neighborhood(g, u), u);
        let mut best = f64::INFINITY;
        for m in 0u64..(1 << support.len()) {
            let v = members(m).fold(0, |s, j| s | (1 << support[j]));
            if g.weight(v, u) >= (1.0 - eta) * full * (1.0 - 1e-12) {
                best = best.min(cond_prob(g, v, a).unwrap());
            }
        }
        best
    }

    #[test]
    fn robust_size_extremes() {
        let mut rng = rng_for(3, &[]);
        for _ in 0..50 {
            let g = random_graph(&mut rng, 10);
            let u = rng.random::<u64>() & g.all();
            let a = (rng.random::<u64>() & g.all()) | 1;
            let support = (0..10)
                .filter(|&x| g.weight(1 << x, u) > 0.0)
                .fold(0, |s, x| s | (1 << x));
            let at0 = robust_neighborhood_size(&g, u, a, 0.0).unwrap();
            assert!((at0 - cond_prob(&g, support, a).unwrap()).abs() < 1e-12);
            assert_eq!(robust_neighborhood_size(&g, u, a, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn robust_size_matches_full_enumeration() {
        let mut rng = rng_for(4, &[]);
        for trial in 0..200 {
            let n = rng.random_range(4..=16);
            let g = random_graph(&mut rng, n);
            let u = rng.random::<u64>() & g.all();
            let a = (rng.random::<u64>() & g.all()) | 1;
            let eta = rng.random_range(0.0..1.0);
            let got = robust_neighborhood_size(&g, u, a, eta).unwrap();
            let want = robust_size_oracle(&g, u, a, eta);
            assert!((got - want).abs() < 1e-12, "trial {trial}: {got} vs {want}");
        }
    }

    #[test]
    fn robust_size_monotone_in_eta() {
        let mut rng = rng_for(5, &[]);
        for _ in 0..50 {
            let g = random_graph(&mut rng, 12);
            let u = rng.random::<u64>() & g.all();
            let a = g.all();
            let f: Vec<Label> = (0..12)
                .map(|_| {
                    if rng.random::<bool>() {
                        Label::Pos
                    } else {
                        Label::Neg
                    }
                })
                .collect();
            let mut prev_size = f64::INFINITY;
            let mut prev_set = 0;
            for k in 0..=20 {
                let eta = k as f64 / 20.0;
                let s = robust_neighborhood_size(&g, u, a, eta).unwrap();
                assert!(s <= prev_size + 1e-12);
                prev_size = s;
                let r = robust_set(&g, &f, eta);
                assert_eq!(r & prev_set, prev_set);
                prev_set = r;
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let g = uniform_graph(24, |_, _| true);
        let err = robust_neighborhood_size(&g, 1, g.all(), 0.5);
        assert!(matches!(err, Err(Error::CapExceeded { size: 24, cap: 20 })));
        let err = check_expansion(&g, g.all(), g.all(), 1.0, 0.0, &SetFamily::AllSubsets, 0.0);
        assert!(matches!(err, Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn complete_bipartite_expands_with_c_one() {
        // A = {0..3}, B = {4..7}; every B point is adjacent to all of A
        let g = uniform_graph(8, |i, j| (i < 4) != (j < 4));
        let (a, b) = (set_from(&[0, 1, 2, 3]), set_from(&[4, 5, 6, 7]));
        let rep = check_expansion(&g, a, b, 1.0, 0.0, &SetFamily::AllSubsets, 0.0).unwrap();
        // U = B has P(U|B) = 1 = P(N(U)|A), so strictness fails exactly there
        assert!(!rep.holds);
        assert_eq!(rep.witness, Some(b));
        let proper: Vec<PointSet> = (1u64..15).map(|m| m << 4).collect();
        let rep = check_expansion(&g, a, b, 1.0, 0.0, &SetFamily::Explicit(proper), 0.0).unwrap();
        assert!(rep.holds);
    }

    #[test]
    fn edgeless_graph_never_expands() {
        let g = uniform_graph(6, |_, _| false);
        let (a, b) = (set_from(&[0, 1, 2]), set_from(&[3, 4, 5]));
        let rep = check_expansion(&g, a, b, 0.1, 0.2, &SetFamily::AllSubsets, 0.0).unwrap();
        assert!(!rep.holds);
        assert_eq!(size(rep.witness.unwrap()), 1);
    }

    #[test]
    fn eta_zero_matches_plain_definition() {
        let mut rng = rng_for(6, &[]);
        for _ in 0..100 {
            let g = random_graph(&mut rng, 10);
            let a = (rng.random::<u64>() & g.all()) | 1;
            let b = (rng.random::<u64>() & g.all()) | 2;
            let c = rng.random_range(0.1..2.0);
            let q = rng.random_range(0.0..0.5);
            let rep = check_expansion(&g, a, b, c, q, &SetFamily::AllSubsets, 0.0).unwrap();
            let mut plain = true;
            for m in 0u64..(1 << 10) {
                let u = m & b;
                if u != m {
                    continue;
                }
                let pu = cond_prob(&g, u, b).unwrap();
                if pu > q && !(cond_prob(&g, neighborhood(&g, u), a).unwrap() > c * pu) {
                    plain = false;
                }
            }
            assert_eq!(rep.holds, plain);
        }
    }

    #[test]
    fn bisection_finds_the_brute_force_ratio() {
        let mut rng = rng_for(7, &[]);
        let mut finite = 0;
        for _ in 0..40 {
            let g = random_graph(&mut rng, 9);
            let a = (rng.random::<u64>() & g.all()) | 1;
            let b = (rng.random::<u64>() & g.all()) | 2;
            let eta = ETA_GRID[rng.random_range(0..4)];
            let brute = expansion_ratio(&g, a, b, 0.1, &SetFamily::AllSubsets, eta).unwrap();
            let bis = optimal_c_bisection(&g, a, b, 0.1, &SetFamily::AllSubsets, eta).unwrap();
            if brute.is_finite() && brute > 0.0 {
                finite += 1;
                assert!((bis - brute).abs() <= 1e-9 * brute, "{bis} vs {brute}");
            } else if brute == 0.0 {
                assert_eq!(bis, 0.0);
            }
        }
        assert!(finite > 10);
    }

    fn search(
        mut accept: impl FnMut(&LabeledInstance, &mut Rng) -> bool,
        seed: u64,
        abstain: f64,
        want: usize,
    ) -> usize {
        let mut rng = rng_for(seed, &[]);
        let mut found = 0;
        for _ in 0..2_000_000 {
            let inst = random_instance(&mut rng, 6, 14, abstain).unwrap();
            if accept(&inst, &mut rng) {
                found += 1;
                if found == want {
                    break;
                }
            }
        }
        found
    }

    #[test]
    fn pseudolabel_correction_never_violated() {
        let mut violations = 0;
        let found = search(
            |inst, rng| {
                let Ok(Some(p)) = draw_correction_params(inst, rng) else {
                    return false;
                };
                let rep = verify_pseudolabel_correction(inst, p.class, p.c, p.q, p.eta).unwrap();
                violations += usize::from(rep.violated());
                rep.hypotheses_hold()
            },
            10,
            0.0,
            500,
        );
        assert_eq!(found, 500);
        assert_eq!(violations, 0);
    }

    #[test]
    fn coverage_expansion_never_violated() {
        let mut violations = 0;
        let found = search(
            |inst, rng| {
                let Ok(Some(p)) = draw_coverage_params(inst, rng, CoverageSource::GoodOverlap)
                else {
                    return false;
                };
                let rep = verify_coverage_expansion(
                    inst,
                    p.class,
                    p.c,
                    p.q,
                    p.eta,
                    CoverageSource::GoodOverlap,
                )
                .unwrap();
                violations += usize::from(rep.violated());
                rep.hypotheses_hold()
            },
            11,
            0.3,
            500,
        );
        assert_eq!(found, 500);
        assert_eq!(violations, 0);
    }

    #[test]
    fn markov_step_never_violated() {
        let mut rng = rng_for(12, &[]);
        for _ in 0..500 {
            let inst = random_instance(&mut rng, 6, 14, 0.0).unwrap();
            let a = (rng.random::<u64>() & inst.graph.all()) | 1;
            let eta = rng.random_range(0.01..1.0);
            let gamma =
                mean_disagreement(&inst.graph, &inst.f, a).unwrap() * rng.random_range(1.0..2.0);
            let rep = verify_markov_robustness(&inst.graph, &inst.f, a, gamma, eta).unwrap();
            assert!(rep.hypotheses_hold());
            assert_eq!(rep.holds, Some(true));
        }
    }

    #[test]
    fn markov_constant_classifier() {
        let g = uniform_graph(5, |i, j| i != j);
        let f = vec![Label::Pos; 5];
        let rep = verify_markov_robustness(&g, &f, g.all(), 0.0, 0.3).unwrap();
        assert_eq!((rep.lhs, rep.holds), (0.0, Some(true)));
    }

    /// Points 0-3 overlap (3 mislabeled), points 4-7 hard (5 and 6 mislabeled),
    /// all class +1 and fully connected.
    fn handmade(f_is_weak: bool) -> LabeledInstance {
        let graph = uniform_graph(8, |_, _| true);
        let pos = Label::Pos;
        let neg = Label::Neg;
        let y = vec![pos; 8];
        let y_tilde = vec![
            Some(pos),
            Some(pos),
            Some(pos),
            Some(neg),
            Some(pos),
            Some(neg),
            Some(neg),
            Some(pos),
        ];
        let region = [Region::Overlap; 4]
            .into_iter()
            .chain([Region::HardOnly; 4])
            .collect();
        let f = if f_is_weak {
            y_tilde.iter().map(|l| l.unwrap()).collect()
        } else {
            y.clone()
        };
        LabeledInstance {
            graph,
            y,
            y_tilde,
            f,
            region,
        }
    }

    #[test]
    fn perfect_classifier_has_zero_error() {
        let inst = handmade(false);
        let rep = verify_pseudolabel_correction(&inst, Label::Pos, 0.5, 0.0, 0.0).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.hypotheses_hold());
        assert_eq!(rep.holds, Some(true));
    }

    #[test]
    fn copying_the_weak_labels_cannot_satisfy_expansion() {
        let inst = handmade(true);
        let (eps1, eps2) = inst.weak_errors(Label::Pos).unwrap();
        assert_eq!((eps1, eps2), (0.25, 0.5));
        let rep = verify_pseudolabel_correction(&inst, Label::Pos, 0.5, 0.0, 1.0).unwrap();
        // R_eta is everything and err(f, weak) = 0, so the bound reads eps2 <= eps2 (1 - 2c)
        assert!((rep.lhs - eps2).abs() < 1e-12);
        assert!((rep.rhs - eps2 * (1.0 - 2.0 * 0.5)).abs() < 1e-12);
        assert!(!rep.hypotheses_hold());
        assert_eq!(rep.holds, None);
    }

    #[test]
    fn empty_conditioning_set_is_named() {
        let mut inst = handmade(false);
        inst.region = vec![Region::EasyOnly; 8];
        match verify_pseudolabel_correction(&inst, Label::Pos, 0.5, 0.0, 0.0) {
            Err(Error::UndefinedConditional(name)) => assert!(name.contains("overlap")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coverage_perfect_and_vacuous() {
        let mut inst = handmade(false);
        inst.y_tilde[6] = None;
        inst.y_tilde[7] = None;
        let rep = verify_coverage_expansion(
            &inst,
            Label::Pos,
            0.5,
            0.0,
            0.0,
            CoverageSource::GoodOverlap,
        )
        .unwrap();
        assert_eq!(rep.lhs, 0.0);
        let rep = verify_coverage_expansion(
            &inst,
            Label::Pos,
            0.5,
            1.0,
            0.0,
            CoverageSource::GoodOverlap,
        )
        .unwrap();
        assert!(rep.rhs >= 1.0);
    }
}
