use rand::Rng as _;
use serde::{Deserialize, Serialize};

use overlap_core::concentration::{
    concentration_row, coordinate_pair, lambda_grid, mgf_check, ConcentrationParams, GaussianPair,
};
use overlap_core::expansion::{
    draw_correction_params, draw_coverage_params, mean_disagreement, random_instance,
    verify_coverage_expansion, verify_markov_robustness, verify_pseudolabel_correction,
    CoverageSource, LabeledInstance, TheoremReport,
};
use overlap_core::experiments::Table;
use overlap_core::rng::{rng_for, Rng};
use overlap_core::smooth::{
    random_split, summarize, verify_derived_expansion, verify_reverse_overlap,
};

use crate::output::{finish, load_config, num, out_dir, ConfigError, Violations};
use crate::Global;

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn check_sizes(min: usize, max: usize) -> anyhow::Result<()> {
    if min < 2 || min > max || max > 20 {
        return Err(ConfigError(format!(
            "need 2 <= min_points <= max_points <= 20, got {min}..{max}"
        ))
        .into());
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionSuite {
    /// Satisfied-hypothesis instances per check.
    pub instances: usize,
    pub min_points: usize,
    pub max_points: usize,
    /// Abstention probability for the coverage instances.
    pub abstain: f64,
    pub coverage_source: CoverageSource,
    pub max_attempts: usize,
}

impl Default for ExpansionSuite {
    fn default() -> Self {
        ExpansionSuite {
            instances: 500,
            min_points: 6,
            max_points: 14,
            abstain: 0.3,
            coverage_source: CoverageSource::GoodOverlap,
            max_attempts: 2_000_000,
        }
    }
}

fn collect(
    rng: &mut Rng,
    suite: &ExpansionSuite,
    abstain: f64,
    mut check: impl FnMut(&LabeledInstance, &mut Rng) -> anyhow::Result<Option<TheoremReport>>,
) -> anyhow::Result<Vec<(usize, TheoremReport)>> {
    let mut found = Vec::new();
    for _ in 0..suite.max_attempts {
        if found.len() == suite.instances {
            break;
        }
        let inst = random_instance(rng, suite.min_points, suite.max_points, abstain)?;
        if let Some(rep) = check(&inst, rng)? {
            if rep.hypotheses_hold() {
                found.push((inst.graph.len(), rep));
            }
        }
    }
    Ok(found)
}

pub fn expansion(g: &Global) -> anyhow::Result<()> {
    let suite: ExpansionSuite = load_config(g)?;
    check_sizes(suite.min_points, suite.max_points)?;
    let seed = g.seed.unwrap_or(0);
    let mut rng = rng_for(seed, &[0x7876]);

    let correction = collect(&mut rng, &suite, 0.0, |inst, rng| {
        Ok(match draw_correction_params(inst, rng)? {
            Some(p) => Some(verify_pseudolabel_correction(
                inst, p.class, p.c, p.q, p.eta,
            )?),
            None => None,
        })
    })?;
    let coverage = collect(&mut rng, &suite, suite.abstain, |inst, rng| {
        Ok(
            match draw_coverage_params(inst, rng, suite.coverage_source)? {
                Some(p) => Some(verify_coverage_expansion(
                    inst,
                    p.class,
                    p.c,
                    p.q,
                    p.eta,
                    suite.coverage_source,
                )?),
                None => None,
            },
        )
    })?;
    let markov = collect(&mut rng, &suite, 0.0, |inst, rng| {
        let a = (rng.random::<u64>() & inst.graph.all()) | 1;
        let eta = rng.random_range(0.01..1.0);
        let gamma = mean_disagreement(&inst.graph, &inst.f, a)? * rng.random_range(1.0..2.0);
        Ok(Some(verify_markov_robustness(
            &inst.graph,
            &inst.f,
            a,
            gamma,
            eta,
        )?))
    })?;

    let mut table = Table {
        header: header(&[
            "check", "instance", "points", "lhs", "rhs", "holds", "tight",
        ]),
        rows: Vec::new(),
    };
    let mut violations = 0;
    let mut counts = serde_json::Map::new();
    for (name, reports) in [
        ("pseudolabel_correction", &correction),
        ("coverage_expansion", &coverage),
        ("markov_robustness", &markov),
    ] {
        let bad = reports.iter().filter(|(_, r)| r.violated()).count();
        violations += bad;
        counts.insert(
            name.into(),
            serde_json::json!({ "instances": reports.len(), "violations": bad }),
        );
        for (i, (points, r)) in reports.iter().enumerate() {
            table.rows.push(vec![
                name.into(),
                i.to_string(),
                points.to_string(),
                num(r.lhs),
                num(r.rhs),
                (!r.violated()).to_string(),
                r.tight.to_string(),
            ]);
        }
    }
    finish(
        &out_dir(g, None)?,
        "verify_expansion",
        "verify-expansion",
        seed,
        &suite,
        &table,
        counts,
    )?;
    if violations > 0 {
        return Err(Violations(violations).into());
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothSuite {
    pub instances: usize,
    pub min_points: usize,
    pub max_points: usize,
}

impl Default for SmoothSuite {
    fn default() -> Self {
        SmoothSuite {
            instances: 500,
            min_points: 6,
            max_points: 14,
        }
    }
}

pub fn smooth(g: &Global) -> anyhow::Result<()> {
    let suite: SmoothSuite = load_config(g)?;
    check_sizes(suite.min_points, suite.max_points)?;
    let seed = g.seed.unwrap_or(0);
    let mut rng = rng_for(seed, &[0x736d]);
    let mut table = Table {
        header: header(&[
            "instance",
            "points",
            "alpha",
            "s_h",
            "rho",
            "rho_prime",
            "q",
            "c_derived",
            "derived_vacuous",
            "derived_holds",
            "identity_holds",
            "inequality_holds",
            "inequality_equality",
        ]),
        rows: Vec::new(),
    };
    let (mut derived_bad, mut identity_bad, mut ineq_bad, mut equality) = (0, 0, 0, 0);
    for i in 0..suite.instances {
        let (graph, good, bad) = random_split(&mut rng, suite.min_points, suite.max_points)?;
        let q = rng.random_range(0.01..0.99);
        let s = summarize(&graph, good, bad, q)?;
        let d = verify_derived_expansion(&graph, good, bad, q)?;
        let r = verify_reverse_overlap(&graph, good, bad)?;
        derived_bad += usize::from(!d.holds);
        identity_bad += usize::from(!r.identity_holds);
        ineq_bad += usize::from(!r.inequality_holds);
        equality += usize::from(r.boundary);
        table.rows.push(vec![
            i.to_string(),
            graph.len().to_string(),
            num(s.alpha),
            num(s.s_h),
            num(s.rho),
            num(s.rho_prime),
            num(s.q),
            num(s.c_derived),
            d.vacuous.to_string(),
            d.holds.to_string(),
            r.identity_holds.to_string(),
            r.inequality_holds.to_string(),
            r.boundary.to_string(),
        ]);
    }
    let summary = serde_json::json!({
        "instances": suite.instances,
        "derived_expansion_violations": derived_bad,
        "reverse_overlap_identity_violations": identity_bad,
        "reverse_overlap_inequality_violations": ineq_bad,
        "reverse_overlap_equality_cases": equality,
    });
    finish(
        &out_dir(g, None)?,
        "verify_smooth",
        "verify-smooth",
        seed,
        &suite,
        &table,
        summary,
    )?;
    let total = derived_bad + identity_bad + ineq_bad;
    if total > 0 {
        return Err(Violations(total).into());
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationSuite {
    pub mu_hard_norm_sq: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<usize>,
    pub trials: usize,
    /// Also check the sub-exponential MGF bound on every coordinate pair.
    pub check_mgf: bool,
    pub lambda_points: usize,
}

impl Default for ConcentrationSuite {
    fn default() -> Self {
        ConcentrationSuite {
            mu_hard_norm_sq: vec![5.0, 10.0, 25.0],
            c: vec![0.5, 1.0, 2.0],
            d: vec![10, 40, 100],
            trials: 100_000,
            check_mgf: true,
            lambda_points: 201,
        }
    }
}

pub fn concentration(g: &Global) -> anyhow::Result<()> {
    let suite: ConcentrationSuite = load_config(g)?;
    let seed = g.seed.unwrap_or(0);
    let mut grid = Table {
        header: header(&[
            "mu_norm_sq",
            "c",
            "d",
            "empirical_gap",
            "gap_se",
            "empirical_error",
            "bound_main",
            "bound_alt",
            "holds",
        ]),
        rows: Vec::new(),
    };
    let mut mgf = Table {
        header: header(&[
            "mu_norm_sq",
            "c",
            "d",
            "coordinate",
            "mu1",
            "sigma1",
            "mu2",
            "sigma2",
            "points",
            "violations",
            "max_ratio",
        ]),
        rows: Vec::new(),
    };
    let (mut grid_bad, mut mgf_bad, mut mgf_pairs) = (0, 0, 0);
    for &m in &suite.mu_hard_norm_sq {
        for &c in &suite.c {
            for &d in &suite.d {
                let p = ConcentrationParams {
                    mu_hard_norm_sq: m,
                    c,
                    d,
                    trials: suite.trials,
                    seed,
                };
                p.validate().map_err(|e| ConfigError(e.to_string()))?;
                let (row, mc) = concentration_row(&p)?;
                grid_bad += usize::from(!row.holds);
                grid.rows.push(vec![
                    num(m),
                    num(c),
                    d.to_string(),
                    num(row.empirical_gap),
                    num(mc.gap_se),
                    num(row.empirical_error),
                    num(row.bound_main),
                    num(row.bound_alt),
                    row.holds.to_string(),
                ]);
                if suite.check_mgf {
                    let spec = p.spec()?;
                    let coords = std::iter::repeat_n(0.0, spec.d_easy)
                        .chain(spec.mu_hard_tilde.iter().copied());
                    for (k, mu) in coords.enumerate() {
                        let pair: GaussianPair = coordinate_pair(mu, c);
                        let rep = mgf_check(pair, &lambda_grid(&pair, suite.lambda_points))?;
                        let ratio = rep
                            .points
                            .iter()
                            .map(|pt| pt.exact / pt.bound)
                            .fold(0.0, f64::max);
                        mgf_pairs += 1;
                        mgf_bad += usize::from(rep.violations > 0);
                        mgf.rows.push(vec![
                            num(m),
                            num(c),
                            d.to_string(),
                            k.to_string(),
                            num(pair.mu1),
                            num(pair.sigma1),
                            num(pair.mu2),
                            num(pair.sigma2),
                            rep.points.len().to_string(),
                            rep.violations.to_string(),
                            num(ratio),
                        ]);
                    }
                }
            }
        }
    }
    let dir = out_dir(g, None)?;
    let summary = serde_json::json!({
        "grid_points": grid.rows.len(),
        "grid_violations": grid_bad,
        "mgf_pairs": mgf_pairs,
        "mgf_pairs_violating": mgf_bad,
    });
    finish(
        &dir,
        "verify_concentration",
        "verify-concentration",
        seed,
        &suite,
        &grid,
        &summary,
    )?;
    if suite.check_mgf {
        finish(
            &dir,
            "verify_concentration_mgf",
            "verify-concentration",
            seed,
            &suite,
            &mgf,
            &summary,
        )?;
    }
    if grid_bad + mgf_bad > 0 {
        return Err(Violations(grid_bad + mgf_bad).into());
    }
    Ok(())
}
