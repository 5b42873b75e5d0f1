//! Logistic classifiers trained by full-batch gradient descent.
//!
//! The same learner serves as the weak model (fit on easy-projected features),
//! the weak-to-strong model (fit on pseudolabels) and the strong ceiling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Label, Region, RegionDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub l2_lambda: f64,
    pub use_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            max_iters: 5000,
            grad_tol: 1e-8,
            l2_lambda: 1e-3,
            use_bias: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be > 0".into()));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Config("l2_lambda must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Weights; the last entry is the bias when `use_bias` is set.
    pub theta: Vec<f64>,
    pub use_bias: bool,
    pub trained_on_projection: bool,
}

/// Diagnostics from a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_norm: f64,
    pub step_size: f64,
    /// Training labels were all identical.
    pub single_class: bool,
    pub loss_history: Vec<f64>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-m))`, stable for large |m|.
fn log1p_exp_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Design matrix, row-major, with an optional trailing constant column.
struct Design {
    rows: Vec<f64>,
    p: usize,
    n: usize,
}

impl Design {
    fn new(features: &[f64], dim: usize, use_bias: bool) -> Result<Design> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "feature dimension must be positive".into(),
            ));
        }
        if features.len() % dim != 0 {
            return Err(Error::Dimension {
                expected: dim,
                got: features.len() % dim,
            });
        }
        if features.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("NaN in features".into()));
        }
        let n = features.len() / dim;
        if !use_bias {
            return Ok(Design {
                rows: features.to_vec(),
                p: dim,
                n,
            });
        }
        let p = dim + 1;
        let mut rows = Vec::with_capacity(n * p);
        for r in features.chunks_exact(dim) {
            rows.extend_from_slice(r);
            rows.push(1.0);
        }
        Ok(Design { rows, p, n })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.p..(i + 1) * self.p]
    }

    /// Largest eigenvalue of `X^T X / n` by power iteration.
    fn gram_top_eigenvalue(&self) -> f64 {
        let mut v = vec![1.0 / (self.p as f64).sqrt(); self.p];
        let mut lambda = 0.0;
        for _ in 0..100 {
            let mut w = vec![0.0; self.p];
            for i in 0..self.n {
                let r = self.row(i);
                let s = dot(r, &v);
                for (wj, rj) in w.iter_mut().zip(r) {
                    *wj += s * rj;
                }
            }
            w.iter_mut().for_each(|x| *x /= self.n as f64);
            let norm = dot(&w, &w).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm;
            v = w.into_iter().map(|x| x / norm).collect();
            if (next - lambda).abs() <= 1e-10 * next {
                return next;
            }
            lambda = next;
        }
        lambda
    }
}

/// Regularized mean logistic loss and its gradient at `theta`.
///
/// `L(theta) = mean_i log(1 + exp(-y_i theta^T x_i)) + lambda/2 |theta|^2`
pub fn loss_and_grad(
    features: &[f64],
    dim: usize,
    labels: &[Label],
    theta: &[f64],
    l2_lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let use_bias = theta.len() == dim + 1;
    if !use_bias && theta.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: theta.len(),
        });
    }
    let design = Design::new(features, dim, use_bias)?;
    if design.n != labels.len() {
        return Err(Error::Dimension {
            expected: design.n,
            got: labels.len(),
        });
    }
    Ok(design_loss_grad(&design, labels, theta, l2_lambda))
}

fn design_loss_grad(
    design: &Design,
    labels: &[Label],
    theta: &[f64],
    l2_lambda: f64,
) -> (f64, Vec<f64>) {
    let n = design.n as f64;
    let mut grad = vec![0.0; design.p];
    let mut loss = 0.0;
    for (i, y) in labels.iter().enumerate() {
        let r = design.row(i);
        let y = y.sign();
        let m = y * dot(r, theta);
        loss += log1p_exp_neg(m);
        let coef = -y * sigmoid(-m);
        for (g, x) in grad.iter_mut().zip(r) {
            *g += coef * x;
        }
    }
    loss /= n;
    grad.iter_mut()
        .zip(theta)
        .for_each(|(g, t)| *g = *g / n + l2_lambda * t);
    loss += 0.5 * l2_lambda * dot(theta, theta);
    (loss, grad)
}

/// Fit by gradient descent from zero.
///
/// The step is `min(learning_rate, 1/L)` with `L` the smoothness constant of
/// the loss, so every iteration is a descent step.
pub fn train_logistic(
    features: &[f64],
    dim: usize,
    labels: &[Label],
    config: &TrainConfig,
) -> Result<(LogisticModel, TrainReport)> {
    config.validate()?;
    let design = Design::new(features, dim, config.use_bias)?;
    if design.n == 0 {
        return Err(Error::EmptyDataset);
    }
    if design.n != labels.len() {
        return Err(Error::Dimension {
            expected: design.n,
            got: labels.len(),
        });
    }
    let single_class = labels.iter().all(|&l| l == labels[0]);
    let smoothness = design.gram_top_eigenvalue() / 4.0 + config.l2_lambda;
    let step = if smoothness > 0.0 {
        config.learning_rate.min(1.0 / smoothness)
    } else {
        config.learning_rate
    };

    let mut theta = vec![0.0; design.p];
    let mut history = Vec::new();
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..config.max_iters {
        let (loss, grad) = design_loss_grad(&design, labels, &theta, config.l2_lambda);
        history.push(loss);
        grad_norm = dot(&grad, &grad).sqrt();
        iterations = it;
        if grad_norm <= config.grad_tol {
            converged = true;
            break;
        }
        theta
            .iter_mut()
            .zip(&grad)
            .for_each(|(t, g)| *t -= step * g);
        iterations = it + 1;
    }
    if !converged {
        let (loss, grad) = design_loss_grad(&design, labels, &theta, config.l2_lambda);
        history.push(loss);
        grad_norm = dot(&grad, &grad).sqrt();
        converged = grad_norm <= config.grad_tol;
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(
            "training diverged to non-finite weights".into(),
        ));
    }
    let model = LogisticModel {
        theta,
        use_bias: config.use_bias,
        trained_on_projection: false,
    };
    let report = TrainReport {
        iterations,
        converged,
        final_grad_norm: grad_norm,
        step_size: step,
        single_class,
        loss_history: history,
    };
    Ok((model, report))
}

/// Which labels a dataset-level fit or evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    TrueLabels,
    Pseudolabels,
}

fn labels_of(data: &RegionDataset, source: LabelSource) -> Result<&[Label]> {
    match source {
        LabelSource::TrueLabels => Ok(data.labels()),
        LabelSource::Pseudolabels => data
            .pseudolabels()
            .ok_or_else(|| Error::InvalidInput("dataset carries no pseudolabels".into())),
    }
}

/// Fit on a dataset, optionally on its easy projection (`project = Some(d_easy)`).
pub fn train_on_dataset(
    data: &RegionDataset,
    source: LabelSource,
    project: Option<usize>,
    config: &TrainConfig,
) -> Result<(LogisticModel, TrainReport)> {
    let labels = labels_of(data, source)?;
    let (mut model, report) = match project {
        Some(d_easy) => {
            let projected = data.project_easy(d_easy)?;
            train_logistic(projected.features(), data.dim(), labels, config)?
        }
        None => train_logistic(data.features(), data.dim(), labels, config)?,
    };
    model.trained_on_projection = project.is_some();
    Ok((model, report))
}

impl LogisticModel {
    pub fn input_dim(&self) -> usize {
        self.theta.len() - usize::from(self.use_bias)
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        let d = self.input_dim();
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        let bias = if self.use_bias { self.theta[d] } else { 0.0 };
        Ok(dot(&self.theta[..d], x) + bias)
    }

    /// Logit with the hard block of `x` treated as zero.
    fn logit_projected(&self, x: &[f64], project: Option<usize>) -> Result<f64> {
        match project {
            None => self.logit(x),
            Some(d_easy) => {
                let d = self.input_dim();
                if x.len() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        got: x.len(),
                    });
                }
                if d_easy > d {
                    return Err(Error::Dimension {
                        expected: d_easy,
                        got: d,
                    });
                }
                let bias = if self.use_bias { self.theta[d] } else { 0.0 };
                Ok(dot(&self.theta[..d_easy], &x[..d_easy]) + bias)
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    pub fn confidence(&self, x: &[f64]) -> Result<f64> {
        let p = self.predict_proba(x)?;
        Ok(p.max(1.0 - p))
    }

    /// Hard prediction; `p = 0.5` exactly goes to `-1`.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(label_from_proba(self.predict_proba(x)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: LogisticModel = serde_json::from_str(s)?;
        if m.theta.is_empty() || (m.use_bias && m.theta.len() < 2) {
            return Err(Error::InvalidInput("model theta too short".into()));
        }
        if m.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("model weights must be finite".into()));
        }
        Ok(m)
    }
}

fn label_from_proba(p: f64) -> Label {
    if p > 0.5 {
        Label::Pos
    } else {
        Label::Neg
    }
}

/// Per-row confidences `max(p, 1-p)`, projecting first when asked.
pub fn confidences(
    model: &LogisticModel,
    data: &RegionDataset,
    project: Option<usize>,
) -> Result<Vec<f64>> {
    data.rows()
        .map(|x| {
            let p = sigmoid(model.logit_projected(x, project)?);
            Ok(p.max(1.0 - p))
        })
        .collect()
}

/// Copy of `data` carrying the model's predictions as pseudolabels.
pub fn pseudolabel(
    model: &LogisticModel,
    data: &RegionDataset,
    project: Option<usize>,
) -> Result<RegionDataset> {
    let labels = data
        .rows()
        .map(|x| {
            Ok(label_from_proba(sigmoid(
                model.logit_projected(x, project)?,
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = data.clone();
    out.set_pseudolabels(labels)?;
    Ok(out)
}

/// Accuracy per region; regions with no rows are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionAccuracy {
    pub easy: Option<f64>,
    pub hard: Option<f64>,
    pub overlap: Option<f64>,
    pub overall: f64,
}

impl RegionAccuracy {
    pub fn get(&self, region: Region) -> Option<f64> {
        match region {
            Region::EasyOnly => self.easy,
            Region::HardOnly => self.hard,
            Region::Overlap => self.overlap,
        }
    }
}

pub fn region_accuracy(
    model: &LogisticModel,
    data: &RegionDataset,
    against: LabelSource,
    project: Option<usize>,
) -> Result<RegionAccuracy> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let truth = labels_of(data, against)?;
    let mut hits = [0usize; 3];
    let mut totals = [0usize; 3];
    for (i, x) in data.rows().enumerate() {
        let pred = label_from_proba(sigmoid(model.logit_projected(x, project)?));
        let r = data.regions()[i].index();
        totals[r] += 1;
        hits[r] += usize::from(pred == truth[i]);
    }
    let frac = |k: usize| (totals[k] > 0).then(|| hits[k] as f64 / totals[k] as f64);
    Ok(RegionAccuracy {
        easy: frac(0),
        hard: frac(1),
        overlap: frac(2),
        overall: hits.iter().sum::<usize>() as f64 / data.len() as f64,
    })
}
