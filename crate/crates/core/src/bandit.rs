//! UCB selection among data sources to maximize the pooled overlap density.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::detection::{detect, DetectConfig};
use crate::error::{Error, Result};
use crate::linear::{pseudolabel, LogisticModel};
use crate::mixture::{sample_from_proportions, GenerationMode, MixtureSpec, Region, RegionDataset};
use crate::rng::{derive_seed, rng_for};

/// `density + sqrt(2 ln T / pulls)`.
pub fn ucb_value(density: f64, pulls: usize, horizon: f64) -> f64 {
    density + (2.0 * horizon.ln() / pulls as f64).sqrt()
}

/// Average-regret bound `(2/T + 2 sqrt(K t ln T)) / t`.
pub fn regret_bound(k: usize, horizon: usize, t: usize) -> f64 {
    let big_t = horizon as f64;
    (2.0 / big_t + 2.0 * (k as f64 * t as f64 * big_t.ln()).sqrt()) / t as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    pub horizon: usize,
    pub per_round: usize,
    pub round: usize,
    pub pulls: Vec<usize>,
    pub sampled: Vec<usize>,
    pub detected: Vec<usize>,
}

impl BanditState {
    pub fn new(k: usize, horizon: usize, per_round: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("need at least one source".into()));
        }
        if horizon < k {
            return Err(Error::Config(format!(
                "horizon {horizon} is shorter than the {k} initialization rounds"
            )));
        }
        if per_round == 0 {
            return Err(Error::Config(
                "per-round sample size must be positive".into(),
            ));
        }
        Ok(BanditState {
            horizon,
            per_round,
            round: 0,
            pulls: vec![0; k],
            sampled: vec![0; k],
            detected: vec![0; k],
        })
    }

    pub fn num_sources(&self) -> usize {
        self.pulls.len()
    }

    pub fn density(&self, s: usize) -> Result<f64> {
        if self.sampled[s] == 0 {
            return Err(Error::UnpulledSource(s));
        }
        Ok(self.detected[s] as f64 / self.sampled[s] as f64)
    }

    pub fn ucb_score(&self, s: usize) -> Result<f64> {
        if s >= self.num_sources() {
            return Err(Error::InvalidInput(format!("source {s} out of range")));
        }
        if self.pulls[s] == 0 {
            return Err(Error::UnpulledSource(s));
        }
        Ok(ucb_value(
            self.density(s)?,
            self.pulls[s],
            self.horizon as f64,
        ))
    }

    /// Unpulled sources first in id order, then argmax UCB with ties to the
    /// lowest id.
    pub fn select_source(&self) -> usize {
        if let Some(s) = self.pulls.iter().position(|&p| p == 0) {
            return s;
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for s in 0..self.num_sources() {
            let score = self.ucb_score(s).expect("all sources pulled");
            if score > best_score {
                best = s;
                best_score = score;
            }
        }
        best
    }

    pub fn record(&mut self, s: usize, sampled: usize, detected: usize) -> Result<()> {
        if detected > sampled {
            return Err(Error::InvalidInput(format!(
                "detected {detected} exceeds sampled {sampled}"
            )));
        }
        self.pulls[s] += 1;
        self.sampled[s] += sampled;
        self.detected[s] += detected;
        self.round += 1;
        Ok(())
    }

    pub fn pooled_density(&self) -> f64 {
        let total: usize = self.sampled.iter().sum();
        if total == 0 {
            0.0
        } else {
            self.detected.iter().sum::<usize>() as f64 / total as f64
        }
    }
}

/// A data source that yields `n` fresh rows per pull.
pub trait Source {
    fn draw(&mut self, n: usize, seed: u64) -> Result<RegionDataset>;
    /// Population overlap density `o(s)`.
    fn overlap_density(&self) -> f64;
}

/// Samples with replacement from a mixture; `o(s) = pi_overlap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub id: usize,
    pub spec: MixtureSpec,
    #[serde(default)]
    pub mode: GenerationMode,
}

impl Source for SourceSpec {
    fn draw(&mut self, n: usize, seed: u64) -> Result<RegionDataset> {
        sample_from_proportions(&self.spec, n, self.mode, seed)
    }

    fn overlap_density(&self) -> f64 {
        self.spec.pi_overlap
    }
}

/// A fixed pool consumed without replacement in a seeded order.
#[derive(Debug, Clone)]
pub struct FinitePoolSource {
    id: usize,
    pool: RegionDataset,
    order: Vec<usize>,
    cursor: usize,
}

impl FinitePoolSource {
    pub fn new(id: usize, pool: RegionDataset, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng_for(seed, &[id as u64]));
        FinitePoolSource {
            id,
            pool,
            order,
            cursor: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.order.len() - self.cursor
    }
}

impl Source for FinitePoolSource {
    fn draw(&mut self, n: usize, _seed: u64) -> Result<RegionDataset> {
        if self.remaining() < n {
            return Err(Error::SourceExhausted(self.id));
        }
        let idx = &self.order[self.cursor..self.cursor + n];
        self.cursor += n;
        Ok(self.pool.subset(idx))
    }

    fn overlap_density(&self) -> f64 {
        self.pool.region_counts().overlap as f64 / self.pool.len().max(1) as f64
    }
}

/// How overlap rows are identified in each pulled batch.
#[derive(Debug, Clone)]
pub enum Detector {
    /// Ground-truth region tags.
    Oracle,
    /// Pseudolabel with the weak model, then run the two-stage detector.
    Detect {
        weak_model: LogisticModel,
        config: DetectConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Ucb,
    /// Uniformly random source every round.
    Random,
    /// Always the source with the highest true density.
    #[serde(alias = "oracle")]
    Best,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub source: usize,
    /// Detected density of this round's batch.
    pub round_density: f64,
    /// Pooled detected density `|O| / |D|` after this round.
    pub o_bar: f64,
    /// Pooled fraction of rows that truly are overlap.
    pub true_density: f64,
    pub regret: f64,
    pub bound: f64,
    pub degenerate: bool,
    /// UCB scores the selection was made from (empty during initialization).
    pub ucb: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SelectionRun {
    pub trace: Vec<TraceRow>,
    pub state: BanditState,
    /// Present when the run kept its samples.
    pub pooled: Option<RegionDataset>,
    /// Indices into `pooled` detected as overlap.
    pub pooled_overlap: Vec<usize>,
    pub best_density: f64,
}

impl SelectionRun {
    pub fn post_init_share(&self, source: usize) -> f64 {
        let k = self.state.num_sources();
        let post: Vec<&TraceRow> = self.trace.iter().filter(|r| r.round > k).collect();
        if post.is_empty() {
            return 0.0;
        }
        post.iter().filter(|r| r.source == source).count() as f64 / post.len() as f64
    }
}

pub struct SelectionConfig {
    pub horizon: usize,
    pub per_round: usize,
    pub policy: Policy,
    pub keep_pool: bool,
}

fn detect_batch(
    batch: &RegionDataset,
    detector: &Detector,
) -> (Vec<usize>, Option<RegionDataset>, bool) {
    match detector {
        Detector::Oracle => (batch.indices_of(Region::Overlap), None, false),
        Detector::Detect { weak_model, config } => {
            let labeled = pseudolabel(weak_model, batch, config.project_easy).ok();
            match detect(batch, weak_model, config) {
                Ok(res) => (res.overlap_idx, labeled, false),
                Err(_) => (Vec::new(), labeled, true),
            }
        }
    }
}

pub fn run_selection(
    sources: &mut [Box<dyn Source>],
    config: &SelectionConfig,
    detector: &Detector,
    seed: u64,
) -> Result<SelectionRun> {
    let k = sources.len();
    let mut state = BanditState::new(k, config.horizon, config.per_round)?;
    let densities: Vec<f64> = sources.iter().map(|s| s.overlap_density()).collect();
    let best_density = densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_source = densities
        .iter()
        .position(|&d| d == best_density)
        .unwrap_or(0);
    let mut policy_rng = rng_for(seed, &[0x706f_6c69]);
    let mut pooled: Option<RegionDataset> = None;
    let mut pooled_overlap = Vec::new();
    let mut pooled_rows = 0usize;
    let mut true_overlap = 0usize;
    let mut trace = Vec::with_capacity(config.horizon);

    for round in 1..=config.horizon {
        let (source, ucb) = match config.policy {
            Policy::Ucb if round <= k => (round - 1, Vec::new()),
            Policy::Ucb => {
                let scores = (0..k)
                    .map(|s| state.ucb_score(s))
                    .collect::<Result<Vec<_>>>()?;
                (state.select_source(), scores)
            }
            Policy::Random => (policy_rng.random_range(0..k), Vec::new()),
            Policy::Best => (best_source, Vec::new()),
        };
        let batch =
            sources[source].draw(config.per_round, derive_seed(seed, &[1, round as u64]))?;
        let (overlap, labeled, degenerate) = detect_batch(&batch, detector);
        state.record(source, batch.len(), overlap.len())?;
        true_overlap += batch.region_counts().overlap;
        if config.keep_pool {
            let batch = labeled.unwrap_or(batch);
            pooled_overlap.extend(overlap.iter().map(|i| i + pooled_rows));
            match pooled.as_mut() {
                Some(p) => p.extend(&batch)?,
                None => pooled = Some(batch.clone()),
            }
            pooled_rows += batch.len();
        } else {
            pooled_rows += batch.len();
        }
        let o_bar = state.pooled_density();
        trace.push(TraceRow {
            round,
            source,
            round_density: overlap.len() as f64 / config.per_round as f64,
            o_bar,
            true_density: true_overlap as f64 / pooled_rows as f64,
            regret: best_density - o_bar,
            bound: regret_bound(k, config.horizon, round),
            degenerate,
            ucb,
        });
    }
    Ok(SelectionRun {
        trace,
        state,
        pooled,
        pooled_overlap,
        best_density,
    })
}

/// Generative sources sharing one base spec, differing only in overlap density;
/// the remainder is split evenly between easy-only and hard-only.
pub fn sources_with_densities(
    base: &MixtureSpec,
    densities: &[f64],
    mode: GenerationMode,
) -> Result<Vec<SourceSpec>> {
    densities
        .iter()
        .enumerate()
        .map(|(id, &o)| {
            let rest = (1.0 - o) / 2.0;
            Ok(SourceSpec {
                id,
                spec: base.with_proportions([rest, 1.0 - o - rest, o])?,
                mode,
            })
        })
        .collect()
}

pub fn boxed(sources: Vec<SourceSpec>) -> Vec<Box<dyn Source>> {
    sources
        .into_iter()
        .map(|s| Box::new(s) as Box<dyn Source>)
        .collect()
}
