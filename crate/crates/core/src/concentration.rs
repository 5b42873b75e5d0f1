//! Separation of overlap scores: `x_ovᵀx_h − x_eᵀx_h` for same-class draws has
//! mean `‖μ̃_hard‖²`, and its lower tail is controlled by sub-exponential
//! bounds. Everything here is either a closed form or a seeded Monte-Carlo
//! estimate of one.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{assemble_means, MixtureSpec};
use crate::rng::{rng_for, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationParams {
    pub mu_hard_norm_sq: f64,
    pub c: f64,
    /// Total dimension `d_easy + d_hard`.
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
}

impl ConcentrationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "c must be > 0, got {}",
                self.c
            )));
        }
        if !(self.mu_hard_norm_sq >= 0.0 && self.mu_hard_norm_sq.is_finite()) {
            return Err(Error::InvalidInput("mu_hard_norm_sq must be >= 0".into()));
        }
        if self.d < 2 {
            return Err(Error::InvalidInput("d must be at least 2".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        Ok(())
    }

    /// Even split, easy block first.
    pub fn dims(&self) -> (usize, usize) {
        let d_easy = self.d / 2;
        (d_easy, self.d - d_easy)
    }

    /// Mixture with `U(0,1)` means, the hard block rescaled to `‖μ̃_hard‖²`.
    pub fn spec(&self) -> Result<MixtureSpec> {
        self.validate()?;
        let (d_easy, d_hard) = self.dims();
        let mut spec = MixtureSpec::with_uniform_means(
            d_easy,
            d_hard,
            self.c,
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            (0.0, 1.0),
            self.seed,
        )?;
        let norm_sq = spec.mu_hard_norm_sq();
        let scale = if norm_sq > 0.0 {
            (self.mu_hard_norm_sq / norm_sq).sqrt()
        } else {
            0.0
        };
        spec.mu_hard_tilde.iter_mut().for_each(|v| *v *= scale);
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Bound {
    pub exponent: f64,
    pub value: f64,
    /// `exp(−min(‖μ‖⁴/((16/3)dc² + 6c‖μ‖²), ‖μ‖²/(8c)))`.
    pub value_alt_form: f64,
}

pub fn theorem2_bound(params: &ConcentrationParams) -> Theorem2Bound {
    let (m, c, d) = (params.mu_hard_norm_sq, params.c, params.d as f64);
    let exponent = (3.0 * m * m / (16.0 * d * c * c + 18.0 * c * m)).min(m / (8.0 * c));
    let alt = (m * m / (16.0 / 3.0 * d * c * c + 6.0 * c * m)).min(m / (8.0 * c));
    Theorem2Bound {
        exponent,
        value: (-exponent).exp(),
        value_alt_form: (-alt).exp(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltBound {
    pub t: f64,
    /// `2ν²/b = (1+√2)²‖μ_hard‖²`.
    pub boundary: f64,
    pub small_regime: bool,
    /// `2^{d/2} exp(−t²/(2ν)²)` or `2^{d/2} exp(−t/(2b))`.
    pub value: f64,
    /// Small regime with `exp(−t²/(2ν²))` instead.
    pub value_statement_form: f64,
}

pub fn alt_bound(t: f64, params: &ConcentrationParams) -> Result<AltBound> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("t must be >= 0, got {t}")));
    }
    let b = 2.0 * params.c;
    let nu_sq = params.c * (1.0 + 2f64.sqrt()).powi(2) * params.mu_hard_norm_sq;
    let boundary = 2.0 * nu_sq / b;
    let log_pre = params.d as f64 / 2.0 * std::f64::consts::LN_2;
    let small_regime = t <= boundary;
    let (value, value_statement_form) = if small_regime {
        // ν = 0 leaves only t = 0 here
        let (proof, stmt) = if nu_sq > 0.0 {
            (t * t / (4.0 * nu_sq), t * t / (2.0 * nu_sq))
        } else {
            (0.0, 0.0)
        };
        ((log_pre - proof).exp(), (log_pre - stmt).exp())
    } else {
        let v = (log_pre - t / (2.0 * b)).exp();
        (v, v)
    };
    Ok(AltBound {
        t,
        boundary,
        small_regime,
        value,
        value_statement_form,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloGap {
    pub empirical_gap: f64,
    pub gap_se: f64,
    /// Fraction of trials with a non-positive gap.
    pub empirical_error: f64,
    /// Same quantities from `x_diff ~ N(μ_hard, 2cI)` paired with `x_h`.
    pub diff_gap: f64,
    pub diff_gap_se: f64,
    pub diff_error: f64,
}

fn mean_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / nf).sqrt())
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Class `+1` triples `(x_overlap, x_easy, x_hard)`, `params.trials` of them.
pub fn mc_gap_and_error(params: &ConcentrationParams, spec: &MixtureSpec) -> Result<MonteCarloGap> {
    params.validate()?;
    spec.validate()?;
    if spec.dim() != params.d || (spec.variance_c - params.c).abs() > 1e-12 * params.c {
        return Err(Error::InvalidInput(
            "spec does not match params (dimension or c)".into(),
        ));
    }
    let means = assemble_means(spec);
    let sd = params.c.sqrt();
    let d = params.d;
    let mut direct = rng_for(params.seed, &[0xc0, 1]);
    let mut diff_rng = rng_for(params.seed, &[0xc0, 2]);
    let (mut s, mut ss, mut bad) = (0.0, 0.0, 0usize);
    let (mut ds, mut dss, mut dbad) = (0.0, 0.0, 0usize);
    for _ in 0..params.trials {
        let mut g = 0.0;
        for j in 0..d {
            let ov = means.overlap[j] + sd * normal(&mut direct);
            let ea = means.easy[j] + sd * normal(&mut direct);
            let ha = means.hard[j] + sd * normal(&mut direct);
            g += (ov - ea) * ha;
        }
        s += g;
        ss += g * g;
        bad += usize::from(g <= 0.0);

        let mut h = 0.0;
        for j in 0..d {
            let xd = means.hard[j] + (2.0 * params.c).sqrt() * normal(&mut diff_rng);
            let ha = means.hard[j] + sd * normal(&mut diff_rng);
            h += xd * ha;
        }
        ds += h;
        dss += h * h;
        dbad += usize::from(h <= 0.0);
    }
    let n = params.trials;
    let (empirical_gap, gap_se) = mean_se(s, ss, n);
    let (diff_gap, diff_gap_se) = mean_se(ds, dss, n);
    Ok(MonteCarloGap {
        empirical_gap,
        gap_se,
        empirical_error: bad as f64 / n as f64,
        diff_gap,
        diff_gap_se,
        diff_error: dbad as f64 / n as f64,
    })
}

/// One row of the `verify-concentration` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub mu_norm_sq: f64,
    pub c: f64,
    pub d: usize,
    pub empirical_gap: f64,
    pub empirical_error: f64,
    pub bound_main: f64,
    pub bound_alt: f64,
    /// The error sits under every bound that is below 1.
    pub holds: bool,
}

pub fn concentration_row(
    params: &ConcentrationParams,
) -> Result<(ConcentrationRow, MonteCarloGap)> {
    let spec = params.spec()?;
    let mc = mc_gap_and_error(params, &spec)?;
    let bound_main = theorem2_bound(params).value;
    let bound_alt = alt_bound(params.mu_hard_norm_sq, params)?.value;
    let under = |b: f64| b >= 1.0 || mc.empirical_error <= b;
    let row = ConcentrationRow {
        mu_norm_sq: params.mu_hard_norm_sq,
        c: params.c,
        d: params.d,
        empirical_gap: mc.empirical_gap,
        empirical_error: mc.empirical_error,
        bound_main,
        bound_alt,
        holds: under(bound_main) && under(bound_alt),
    };
    Ok((row, mc))
}

/// `X1 ~ N(μ1, σ1²)`, `X2 ~ N(μ2, σ2²)` independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPair {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
}

impl GaussianPair {
    /// `μ1²σ2² + μ2²σ1² + (4/3)σ1²σ2²`.
    pub fn nu_sq(&self) -> f64 {
        let (s1, s2) = (self.sigma1 * self.sigma1, self.sigma2 * self.sigma2);
        self.mu1 * self.mu1 * s2 + self.mu2 * self.mu2 * s1 + 4.0 / 3.0 * s1 * s2
    }

    /// Open domain `|λ| < 1/(2σ1σ2)`.
    pub fn lambda_max(&self) -> f64 {
        1.0 / (2.0 * self.sigma1 * self.sigma2)
    }

    /// `E[exp(λ(X1X2 − μ1μ2))]` via `E[e^{C+Bξ+Aξ²}] = e^C e^{B²/(2(1−2A))}/√(1−2A)`.
    pub fn centered_mgf(&self, lambda: f64) -> Result<f64> {
        let a = lambda * lambda * self.sigma1.powi(2) * self.sigma2.powi(2) / 2.0;
        if 2.0 * a >= 1.0 {
            return Err(Error::OutOfRegime(format!(
                "lambda = {lambda} outside the MGF domain"
            )));
        }
        let b = lambda * self.mu2 * self.sigma1
            + lambda * lambda * self.sigma1 * self.sigma2.powi(2) * self.mu1;
        let c = lambda * lambda * self.mu1 * self.mu1 * self.sigma2.powi(2) / 2.0;
        Ok((c + b * b / (2.0 * (1.0 - 2.0 * a))).exp() / (1.0 - 2.0 * a).sqrt())
    }

    pub fn mgf_bound(&self, lambda: f64) -> f64 {
        (lambda * lambda * self.nu_sq() / 2.0).exp()
    }

    /// `√2 exp(λ²(μ1σ2 + μ2σ1)²)`, the per-coordinate step behind the
    /// `2^{d/2}` bound, on `|λ| ≤ 1/(√2 σ1σ2)`. Needs `μ1μ2 ≥ 0`.
    pub fn coordinate_bound(&self, lambda: f64) -> Option<f64> {
        let s = self.sigma1 * self.sigma2;
        if lambda.abs() * s * 2f64.sqrt() > 1.0 || self.mu1 * self.mu2 < 0.0 {
            return None;
        }
        let m = self.mu1 * self.sigma2 + self.mu2 * self.sigma1;
        Some(2f64.sqrt() * (lambda * lambda * m * m).exp())
    }

    /// Sample mean and standard error of `exp(λ(X1X2 − μ1μ2))`.
    pub fn mgf_monte_carlo(&self, lambda: f64, samples: usize, rng: &mut Rng) -> (f64, f64) {
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in 0..samples {
            let x1 = self.mu1 + self.sigma1 * normal(rng);
            let x2 = self.mu2 + self.sigma2 * normal(rng);
            let v = (lambda * (x1 * x2 - self.mu1 * self.mu2)).exp();
            s += v;
            ss += v * v;
        }
        mean_se(s, ss, samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfPoint {
    pub lambda: f64,
    pub exact: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgfReport {
    pub pair: GaussianPair,
    pub points: Vec<MgfPoint>,
    pub violations: usize,
}

/// Closed-form MGF against `exp(λ²ν²/2)` on every grid point.
pub fn mgf_check(pair: GaussianPair, lambda_grid: &[f64]) -> Result<MgfReport> {
    let lmax = pair.lambda_max();
    let mut points = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        if !(lambda.abs() < lmax) {
            return Err(Error::OutOfRegime(format!(
                "|lambda| = {} must be < {lmax}",
                lambda.abs()
            )));
        }
        let exact = pair.centered_mgf(lambda)?;
        let bound = pair.mgf_bound(lambda);
        points.push(MgfPoint {
            lambda,
            exact,
            bound,
            holds: exact <= bound * (1.0 + 1e-12),
        });
    }
    let violations = points.iter().filter(|p| !p.holds).count();
    Ok(MgfReport {
        pair,
        points,
        violations,
    })
}

/// `n` evenly spaced points strictly inside `(−λmax, λmax)`.
pub fn lambda_grid(pair: &GaussianPair, n: usize) -> Vec<f64> {
    let lmax = pair.lambda_max();
    (0..n)
        .map(|i| lmax * (2.0 * (i as f64 + 0.5) / n as f64 - 1.0))
        .collect()
}

/// Per-coordinate pair in the overlap-score setting: `σ1² = 2c`, `σ2² = c`, `μ1 = μ2 = m`.
pub fn coordinate_pair(m: f64, c: f64) -> GaussianPair {
    GaussianPair {
        mu1: m,
        sigma1: (2.0 * c).sqrt(),
        mu2: m,
        sigma2: c.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub checked: usize,
    /// `y` values where `1/√(1−y) > e^{y/(2(1−y))}`.
    pub violations: Vec<f64>,
}

pub fn technical_inequality_check(y_grid: &[f64]) -> Result<InequalityReport> {
    let mut violations = Vec::new();
    for &y in y_grid {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::InvalidInput(format!("y = {y} outside (0, 1)")));
        }
        // compare logs; both sides overflow near 1
        if -0.5 * (1.0 - y).ln() > y / (2.0 * (1.0 - y)) * (1.0 + 1e-12) {
            violations.push(y);
        }
    }
    Ok(InequalityReport {
        checked: y_grid.len(),
        violations,
    })
}
