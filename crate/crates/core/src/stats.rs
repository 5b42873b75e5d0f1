//! Small statistics used by the experiment checks.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn student(df: f64) -> Result<StudentsT> {
    StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidInput(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub mean_diff: f64,
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for `mean(a − b) > 0`.
    pub p_greater: f64,
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidInput(
            "paired test needs two equal samples of size >= 2".into(),
        ));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_std(&d);
    let df = (d.len() - 1) as f64;
    let se = sd / (d.len() as f64).sqrt();
    let t = if se > 0.0 {
        mean / se
    } else if mean > 0.0 {
        f64::INFINITY
    } else if mean < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let p_greater = if t.is_finite() {
        1.0 - student(df)?.cdf(t)
    } else if t > 0.0 {
        0.0
    } else {
        1.0
    };
    Ok(PairedTest {
        mean_diff: mean,
        t,
        df,
        p_greater,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Least squares `y = a + b x` with a two-sided `level` confidence interval on `b`.
pub fn ols_slope(x: &[f64], y: &[f64], level: f64) -> Result<SlopeFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidInput(
            "slope fit needs >= 3 paired points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("x has no spread".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    let q = student(n - 2.0)?.inverse_cdf(0.5 + level / 2.0);
    Ok(SlopeFit {
        slope,
        intercept,
        se,
        ci_low: slope - q * se,
        ci_high: slope + q * se,
    })
}

/// Weighted non-decreasing isotonic fit (pool adjacent violators).
pub fn isotonic_increasing(y: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), w.len());
    // blocks of (value, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&v, &wt) in y.iter().zip(w) {
        blocks.push((v, wt, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (v2, w2, l2) = blocks.pop().unwrap();
            let (v1, w1, l1) = blocks.pop().unwrap();
            let wt = w1 + w2;
            blocks.push(((v1 * w1 + v2 * w2) / wt, wt, l1 + l2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, l)| std::iter::repeat_n(v, l))
        .collect()
}

/// Slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput(
            "log-log fit needs positive values".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    Ok(ols_slope(&lx, &ly, 0.95)?.slope)
}
