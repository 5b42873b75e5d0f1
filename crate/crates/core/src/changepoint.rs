//! Single change point on sorted scores by binary segmentation with an L2 cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_SEGMENT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePointResult {
    /// Number of sorted scores in the lower segment.
    pub split_index: usize,
    /// Midpoint of the two sorted scores either side of the split.
    pub threshold: f64,
    pub cost_reduction: f64,
}

/// Relative slack under which two candidate costs count as tied.
const TIE_RTOL: f64 = 1e-10;

pub fn binseg_single(scores: &[f64], min_segment: usize) -> Result<ChangePointResult> {
    let n = scores.len();
    let min_segment = min_segment.max(1);
    if n < 2 * min_segment {
        return Err(Error::TooFewPoints {
            needed: 2 * min_segment,
            got: n,
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(
            "change-point scores must be finite".into(),
        ));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[n - 1] {
        return Err(Error::NoChangePoint(n));
    }

    // centring first keeps the prefix-sum cancellation small
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let mut sum = vec![0.0; n + 1];
    let mut sq = vec![0.0; n + 1];
    for (i, &s) in sorted.iter().enumerate() {
        let v = s - mean;
        sum[i + 1] = sum[i] + v;
        sq[i + 1] = sq[i] + v * v;
    }
    let sse = |a: usize, b: usize| -> f64 {
        let m = (b - a) as f64;
        let s = sum[b] - sum[a];
        (sq[b] - sq[a] - s * s / m).max(0.0)
    };
    let total = sse(0, n);
    let costs: Vec<(usize, f64)> = (min_segment..=n - min_segment)
        .map(|k| (k, sse(0, k) + sse(k, n)))
        .collect();
    let best = costs.iter().map(|&(_, c)| c).fold(f64::INFINITY, f64::min);
    let slack = TIE_RTOL * total.max(f64::MIN_POSITIVE);
    let (split_index, cost) = *costs
        .iter()
        .find(|&&(_, c)| c <= best + slack)
        .expect("at least one admissible split");
    Ok(ChangePointResult {
        split_index,
        threshold: 0.5 * (sorted[split_index - 1] + sorted[split_index]),
        cost_reduction: (total - cost).max(0.0),
    })
}
