//! Two-stage overlap detection.
//!
//! Step 1 splits low-confidence (hard-only) rows from the rest with a change
//! point on weak-model confidences. Step 2 scores each remaining row by its
//! strongest alignment with a detected hard-only row and splits again.

use serde::{Deserialize, Serialize};

use crate::changepoint::{binseg_single, DEFAULT_MIN_SEGMENT};
use crate::error::{Error, Result};
use crate::linear::{confidences, dot, LogisticModel};
use crate::mixture::{Region, RegionDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMetric {
    #[default]
    InnerProduct,
    AbsCosine,
}

/// What to do when every confidence is identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatPolicy {
    AllHard,
    NoneHard,
    #[default]
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub metric: OverlapMetric,
    pub min_segment: usize,
    pub on_flat: FlatPolicy,
    /// Zero the hard block before scoring confidence.
    pub project_easy: Option<usize>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            metric: OverlapMetric::InnerProduct,
            min_segment: DEFAULT_MIN_SEGMENT,
            on_flat: FlatPolicy::Error,
            project_easy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub hard_only_idx: Vec<usize>,
    pub easy_only_idx: Vec<usize>,
    pub overlap_idx: Vec<usize>,
    pub tau_hard: f64,
    /// `None` when Step 2 had nothing to split (everything was hard-only).
    pub tau_overlap: Option<f64>,
    pub confidence_scores: Vec<f64>,
    /// Score per row; `None` for detected hard-only rows.
    pub overlap_scores: Vec<Option<f64>>,
}

impl DetectionResult {
    /// Region assigned to each row.
    pub fn assignments(&self) -> Vec<Region> {
        let n = self.confidence_scores.len();
        let mut out = vec![Region::EasyOnly; n];
        for &i in &self.hard_only_idx {
            out[i] = Region::HardOnly;
        }
        for &i in &self.overlap_idx {
            out[i] = Region::Overlap;
        }
        out
    }

    pub fn overlap_density(&self) -> f64 {
        self.overlap_idx.len() as f64 / self.confidence_scores.len().max(1) as f64
    }
}

/// Largest `|<x, h>|` (or `|cos|`) over the rows of `hard_set`.
pub fn overlap_score(x: &[f64], hard_set: &[&[f64]], metric: OverlapMetric) -> Result<f64> {
    if hard_set.is_empty() {
        return Err(Error::InvalidInput(
            "overlap score needs a nonempty hard set".into(),
        ));
    }
    for h in hard_set {
        if h.len() != x.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: h.len(),
            });
        }
    }
    match metric {
        OverlapMetric::InnerProduct => {
            Ok(hard_set.iter().map(|h| dot(x, h).abs()).fold(0.0, f64::max))
        }
        OverlapMetric::AbsCosine => {
            let nx = dot(x, x).sqrt();
            let mut best: Option<f64> = None;
            for h in hard_set {
                let nh = dot(h, h).sqrt();
                if nh == 0.0 {
                    continue;
                }
                let c = if nx == 0.0 {
                    0.0
                } else {
                    (dot(x, h) / (nx * nh)).abs()
                };
                best = Some(best.map_or(c, |b| b.max(c)));
            }
            best.ok_or_else(|| Error::InvalidInput("every hard row has zero norm".into()))
        }
    }
}

pub fn detect(
    data: &RegionDataset,
    model: &LogisticModel,
    config: &DetectConfig,
) -> Result<DetectionResult> {
    let n = data.len();
    let min_seg = config.min_segment.max(1);
    if n < 4 * min_seg {
        return Err(Error::TooFewPoints {
            needed: 4 * min_seg,
            got: n,
        });
    }
    let conf = confidences(model, data, config.project_easy)?;

    let (tau_hard, hard_only_idx): (f64, Vec<usize>) = match binseg_single(&conf, min_seg) {
        Ok(cp) => (
            cp.threshold,
            (0..n).filter(|&i| conf[i] <= cp.threshold).collect(),
        ),
        Err(Error::NoChangePoint(_)) => match config.on_flat {
            FlatPolicy::AllHard => (conf[0], (0..n).collect()),
            FlatPolicy::NoneHard => (f64::NEG_INFINITY, Vec::new()),
            FlatPolicy::Error => return Err(Error::NoChangePoint(n)),
        },
        Err(e) => return Err(e),
    };
    if hard_only_idx.is_empty() {
        return Err(Error::DetectionDegenerate(
            "no hard-only rows to score overlap against".into(),
        ));
    }

    let mut is_hard = vec![false; n];
    hard_only_idx.iter().for_each(|&i| is_hard[i] = true);
    let rest: Vec<usize> = (0..n).filter(|&i| !is_hard[i]).collect();
    let mut overlap_scores = vec![None; n];
    if rest.is_empty() {
        return Ok(DetectionResult {
            hard_only_idx,
            easy_only_idx: Vec::new(),
            overlap_idx: Vec::new(),
            tau_hard,
            tau_overlap: None,
            confidence_scores: conf,
            overlap_scores,
        });
    }

    let hard_rows: Vec<&[f64]> = hard_only_idx.iter().map(|&i| data.row(i)).collect();
    let mut scores = Vec::with_capacity(rest.len());
    for &i in &rest {
        let s = overlap_score(data.row(i), &hard_rows, config.metric)?;
        overlap_scores[i] = Some(s);
        scores.push(s);
    }
    let cp = binseg_single(&scores, min_seg).map_err(|e| match e {
        Error::NoChangePoint(_) | Error::TooFewPoints { .. } => {
            Error::DetectionDegenerate(format!("overlap split failed: {e}"))
        }
        other => other,
    })?;
    let tau_overlap = cp.threshold;
    let (overlap_idx, easy_only_idx): (Vec<usize>, Vec<usize>) = rest
        .iter()
        .partition(|&&i| overlap_scores[i].is_some_and(|s| s >= tau_overlap));
    Ok(DetectionResult {
        hard_only_idx,
        easy_only_idx,
        overlap_idx,
        tau_hard,
        tau_overlap: Some(tau_overlap),
        confidence_scores: conf,
        overlap_scores,
    })
}

/// Rows whose score is at least `tau`, for re-thresholding fixed scores.
pub fn overlap_at_threshold(result: &DetectionResult, tau: f64) -> Vec<usize> {
    (0..result.overlap_scores.len())
        .filter(|&i| result.overlap_scores[i].is_some_and(|s| s >= tau))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// `confusion[true][predicted]`, indexed easy, hard, overlap.
    pub confusion: [[usize; 3]; 3],
    pub precision: [Option<f64>; 3],
    pub recall: [Option<f64>; 3],
    /// Detected fraction of rows per region.
    pub densities: [f64; 3],
}

impl DetectionReport {
    pub fn precision_of(&self, r: Region) -> Option<f64> {
        self.precision[r.index()]
    }

    pub fn recall_of(&self, r: Region) -> Option<f64> {
        self.recall[r.index()]
    }

    pub fn overlap_density(&self) -> f64 {
        self.densities[Region::Overlap.index()]
    }
}

pub fn detection_report(result: &DetectionResult, data: &RegionDataset) -> Result<DetectionReport> {
    report_from_assignments(&result.assignments(), data.regions())
}

pub fn report_from_assignments(predicted: &[Region], truth: &[Region]) -> Result<DetectionReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let mut confusion = [[0usize; 3]; 3];
    for (t, p) in truth.iter().zip(predicted) {
        confusion[t.index()][p.index()] += 1;
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let n = truth.len().max(1) as f64;
    let mut precision = [None; 3];
    let mut recall = [None; 3];
    let mut densities = [0.0; 3];
    for k in 0..3 {
        let col: usize = (0..3).map(|t| confusion[t][k]).sum();
        let row: usize = confusion[k].iter().sum();
        precision[k] = ratio(confusion[k][k], col);
        recall[k] = ratio(confusion[k][k], row);
        densities[k] = col as f64 / n;
    }
    Ok(DetectionReport {
        confusion,
        precision,
        recall,
        densities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{train_on_dataset, LabelSource, TrainConfig};
    use crate::mixture::{sample_dataset, GenerationMode, Label, MixtureSpec, RegionCounts};

    #[test]
    fn orthogonal_and_self_aligned_scores() {
        let h1 = [1.0, 0.0, 0.0];
        let h2 = [0.0, 2.0, 0.0];
        let hard: Vec<&[f64]> = vec![&h1, &h2];
        assert_eq!(
            overlap_score(&[0.0, 0.0, 5.0], &hard, OverlapMetric::InnerProduct).unwrap(),
            0.0
        );
        assert_eq!(
            overlap_score(&h2, &hard, OverlapMetric::InnerProduct).unwrap(),
            4.0
        );
        assert_eq!(
            overlap_score(&h2, &hard, OverlapMetric::AbsCosine).unwrap(),
            1.0
        );
        assert_eq!(
            overlap_score(&[0.0, -3.0, 0.0], &hard, OverlapMetric::AbsCosine).unwrap(),
            1.0
        );
    }

    #[test]
    fn overlap_score_errors() {
        assert!(overlap_score(&[1.0], &[], OverlapMetric::InnerProduct).is_err());
        let z = [0.0, 0.0];
        assert!(overlap_score(&[1.0, 1.0], &[&z], OverlapMetric::AbsCosine).is_err());
        let short = [1.0];
        assert!(matches!(
            overlap_score(&[1.0, 1.0], &[&short], OverlapMetric::InnerProduct),
            Err(Error::Dimension { .. })
        ));
    }

    fn strong_spec(seed: u64) -> MixtureSpec {
        let scale = |v: Vec<f64>| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x * 5.0 / n).collect::<Vec<_>>()
        };
        let base =
            MixtureSpec::with_uniform_means(20, 20, 1.0, [1.0 / 3.0; 3], (0.0, 1.0), seed).unwrap();
        MixtureSpec::new(
            scale(base.mu_easy_tilde),
            scale(base.mu_hard_tilde),
            1.0,
            [1.0 / 3.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn ideal_mode_recovers_hard_rows_exactly() {
        let spec = strong_spec(1);
        let data = sample_dataset(
            &spec,
            RegionCounts::new(100, 100, 100),
            GenerationMode::Ideal,
            1,
        )
        .unwrap();
        let (weak, _) = train_on_dataset(
            &data,
            LabelSource::TrueLabels,
            Some(20),
            &TrainConfig::default(),
        )
        .unwrap();
        let res = detect(&data, &weak, &DetectConfig::default()).unwrap();
        assert_eq!(res.hard_only_idx, data.indices_of(Region::HardOnly));
        assert!(res.tau_hard > 0.5);
        // easy rows have a zero hard block, so their scores are exactly zero
        assert_eq!(res.overlap_idx, data.indices_of(Region::Overlap));
    }

    #[test]
    fn flat_confidences_follow_policy() {
        let spec = strong_spec(2);
        let data =
            sample_dataset(&spec, RegionCounts::new(0, 40, 0), GenerationMode::Ideal, 2).unwrap();
        let weak = LogisticModel {
            theta: [vec![1.0; 20], vec![0.0; 20]].concat(),
            use_bias: false,
            trained_on_projection: true,
        };
        let cfg = DetectConfig::default();
        assert!(matches!(
            detect(&data, &weak, &cfg),
            Err(Error::NoChangePoint(_))
        ));
        let all = detect(
            &data,
            &weak,
            &DetectConfig {
                on_flat: FlatPolicy::AllHard,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(all.hard_only_idx.len(), 40);
        assert!(all.overlap_idx.is_empty() && all.tau_overlap.is_none());
        assert!(matches!(
            detect(
                &data,
                &weak,
                &DetectConfig {
                    on_flat: FlatPolicy::NoneHard,
                    ..cfg
                }
            ),
            Err(Error::DetectionDegenerate(_))
        ));
    }

    #[test]
    fn partition_and_threshold_invariants() {
        let spec = strong_spec(3);
        let data = sample_dataset(
            &spec,
            RegionCounts::new(60, 60, 60),
            GenerationMode::Gaussian,
            3,
        )
        .unwrap();
        let (weak, _) = train_on_dataset(
            &data,
            LabelSource::TrueLabels,
            Some(20),
            &TrainConfig::default(),
        )
        .unwrap();
        let res = detect(&data, &weak, &DetectConfig::default()).unwrap();
        let mut all: Vec<usize> = res
            .hard_only_idx
            .iter()
            .chain(&res.easy_only_idx)
            .chain(&res.overlap_idx)
            .copied()
            .collect();
        all.sort();
        assert_eq!(all, (0..data.len()).collect::<Vec<_>>());
        assert!(res
            .hard_only_idx
            .iter()
            .all(|&i| res.confidence_scores[i] <= res.tau_hard));
        let tau = res.tau_overlap.unwrap();
        assert!(res
            .overlap_idx
            .iter()
            .all(|&i| res.overlap_scores[i].unwrap() >= tau));
        let mut prev = overlap_at_threshold(&res, f64::NEG_INFINITY);
        for k in 0..50 {
            let next = overlap_at_threshold(&res, tau * k as f64 / 25.0);
            assert!(next.iter().all(|i| prev.contains(i)));
            prev = next;
        }
    }

    #[test]
    fn report_counts() {
        let truth: Vec<Region> = [Region::EasyOnly, Region::HardOnly, Region::Overlap].repeat(4);
        let perfect = report_from_assignments(&truth, &truth).unwrap();
        for k in 0..3 {
            for j in 0..3 {
                assert_eq!(perfect.confusion[k][j], if k == j { 4 } else { 0 });
            }
        }
        let all_overlap = vec![Region::Overlap; truth.len()];
        let r = report_from_assignments(&all_overlap, &truth).unwrap();
        assert_eq!(r.recall_of(Region::Overlap), Some(1.0));
        assert!((r.precision_of(Region::Overlap).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.precision_of(Region::EasyOnly), None);
        assert_eq!(r.overlap_density(), 1.0);
    }

    #[test]
    fn metrics_agree_when_norms_are_equal() {
        // rotate every row onto the unit sphere so norms match
        let spec = strong_spec(4);
        let raw = sample_dataset(
            &spec,
            RegionCounts::new(40, 40, 40),
            GenerationMode::Gaussian,
            4,
        )
        .unwrap();
        let feats: Vec<f64> = raw
            .rows()
            .flat_map(|r| {
                let n = dot(r, r).sqrt();
                r.iter().map(move |v| v / n).collect::<Vec<_>>()
            })
            .collect();
        let labels: Vec<Label> = raw.labels().to_vec();
        let data = RegionDataset::new(40, feats, labels, raw.regions().to_vec(), None).unwrap();
        let (weak, _) = train_on_dataset(
            &data,
            LabelSource::TrueLabels,
            Some(20),
            &TrainConfig::default(),
        )
        .unwrap();
        let a = detect(&data, &weak, &DetectConfig::default()).unwrap();
        let b = detect(
            &data,
            &weak,
            &DetectConfig {
                metric: OverlapMetric::AbsCosine,
                ..DetectConfig::default()
            },
        )
        .unwrap();
        assert_eq!(a.overlap_idx, b.overlap_idx);
    }
}
