//! Synthetic experiment protocols and their CSV artifacts.
//!
//! Every dataset is seeded per `(seed, role)` and rows are seeded per
//! `(region, row)`, so a larger sweep point contains the rows of every smaller
//! one. Comparisons across sweep points, noise settings and policies therefore
//! run on common random numbers.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandit::{
    boxed, run_selection, sources_with_densities, Detector, Policy, SelectionConfig,
};
use crate::detection::{detect, DetectConfig};
use crate::error::{Error, Result};
use crate::linear::{
    pseudolabel, region_accuracy, train_on_dataset, LabelSource, LogisticModel, RegionAccuracy,
    TrainConfig,
};
use crate::mixture::{
    sample_dataset, GenerationMode, MixtureSpec, Region, RegionCounts, RegionDataset,
};
use crate::rng::derive_seed;
use crate::stats::mean_std;

pub const ARTIFACT_VERSION: &str = "1";

const ROLE_TRAIN: u64 = 0x7472;
const ROLE_W2S: u64 = 0x7732;
const ROLE_TEST: u64 = 0x7465;
const ROLE_SELECT: u64 = 0x7365;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepParams {
    pub n_easy: usize,
    pub n_hard: usize,
    pub overlap_start: usize,
    pub overlap_step: usize,
    pub overlap_max: usize,
    pub test_per_region: usize,
    /// Train the w2s model on rows the two-stage detector marks as overlap
    /// instead of on the true overlap rows.
    pub detected: bool,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            n_easy: 100,
            n_hard: 100,
            overlap_start: 0,
            overlap_step: 5,
            overlap_max: 100,
            test_per_region: 1000,
            detected: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationParams {
    /// Count of the region that is not swept (hard-only for the easy ablation).
    pub n_fixed: usize,
    pub n_overlap: usize,
    pub start: usize,
    pub step: usize,
    pub increments: usize,
    pub test_per_region: usize,
}

impl Default for AblationParams {
    fn default() -> Self {
        AblationParams {
            n_fixed: 100,
            n_overlap: 10,
            start: 100,
            step: 5,
            increments: 20,
            test_per_region: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoiseType {
    /// Contamination drawn from easy-only rows.
    N1,
    /// From hard-only rows.
    N2,
    /// Split: floor half easy, the rest hard.
    N3,
}

impl NoiseType {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseType::N1 => "N1",
            NoiseType::N2 => "N2",
            NoiseType::N3 => "N3",
        }
    }

    /// `(easy, hard, overlap)` rows in a w2s training set of nominal size `n_overlap`.
    pub fn composition(self, epsilon: f64, n_overlap: usize) -> (usize, usize, usize) {
        let k = (epsilon * n_overlap as f64).round() as usize;
        let k = k.min(n_overlap);
        let (e, h) = match self {
            NoiseType::N1 => (k, 0),
            NoiseType::N2 => (0, k),
            NoiseType::N3 => (k / 2, k - k / 2),
        };
        (e, h, n_overlap - k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub n_easy: usize,
    pub n_hard: usize,
    pub overlap_start: usize,
    pub overlap_step: usize,
    pub overlap_max: usize,
    pub epsilons: Vec<f64>,
    pub noise_types: Vec<NoiseType>,
    pub test_per_region: usize,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            n_easy: 100,
            n_hard: 500,
            overlap_start: 10,
            overlap_step: 10,
            overlap_max: 100,
            epsilons: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            noise_types: vec![NoiseType::N1, NoiseType::N2, NoiseType::N3],
            test_per_region: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Oracle,
    Detect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionParams {
    pub densities: Vec<f64>,
    pub horizon: usize,
    pub per_round: usize,
    pub detector: DetectorKind,
    pub policies: Vec<Policy>,
    /// Region counts of the weak model's training set.
    pub weak_train: [usize; 3],
    /// Train and score a w2s model every this many rounds; 0 disables.
    pub checkpoint_every: usize,
    pub test_per_region: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            densities: vec![0.1, 0.15, 0.2, 0.05, 0.8],
            horizon: 50,
            per_round: 100,
            detector: DetectorKind::Oracle,
            policies: vec![Policy::Ucb, Policy::Random, Policy::Best],
            weak_train: [100, 100, 100],
            checkpoint_every: 50,
            test_per_region: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Protocol {
    MechanismSweep(SweepParams),
    EasyAblation(AblationParams),
    HardAblation(AblationParams),
    NoiseAblation(NoiseParams),
    DataSelection(SelectionParams),
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::MechanismSweep(_) => "mechanism_sweep",
            Protocol::EasyAblation(_) => "easy_ablation",
            Protocol::HardAblation(_) => "hard_ablation",
            Protocol::NoiseAblation(_) => "noise_ablation",
            Protocol::DataSelection(_) => "data_selection",
        }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub protocol: Protocol,
    /// Mixture to sample from; defaults to `c = 5`, 20 + 20 dimensions, `U(0,1)` means.
    #[serde(default)]
    pub spec: Option<MixtureSpec>,
    #[serde(default)]
    pub mean_seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn new(protocol: Protocol) -> Self {
        ExperimentConfig {
            protocol,
            spec: None,
            mean_seed: 0,
            seeds: default_seeds(),
            train: TrainConfig::default(),
            output: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let cfg: ExperimentConfig =
            serde_json::from_value(raw.clone()).map_err(|e| Error::Config(e.to_string()))?;
        // flatten rules out deny_unknown_fields, so compare against the re-encoded config
        if let (Some(given), serde_json::Value::Object(known)) =
            (raw.as_object(), serde_json::to_value(&cfg)?)
        {
            if let Some(k) = given.keys().find(|k| !known.contains_key(*k)) {
                return Err(Error::Config(format!(
                    "unknown field {k:?} for {}",
                    cfg.protocol.name()
                )));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        self.train.validate()?;
        if let Some(spec) = &self.spec {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let bad = |m: &str| Err(Error::Config(m.into()));
        match &self.protocol {
            Protocol::MechanismSweep(p) => {
                if p.overlap_step == 0 || p.overlap_start > p.overlap_max || p.test_per_region == 0
                {
                    return bad("sweep needs step > 0, start <= max and a test set");
                }
            }
            Protocol::EasyAblation(p) | Protocol::HardAblation(p) => {
                if p.step == 0 || p.test_per_region == 0 {
                    return bad("ablation needs step > 0 and a test set");
                }
            }
            Protocol::NoiseAblation(p) => {
                if p.overlap_step == 0 || p.overlap_start > p.overlap_max || p.test_per_region == 0
                {
                    return bad("noise sweep needs step > 0, start <= max and a test set");
                }
                if p.epsilons.is_empty() || p.epsilons.iter().any(|e| !(0.0..1.0).contains(e)) {
                    return bad("epsilons must be a nonempty subset of [0, 1)");
                }
                if p.noise_types.is_empty() {
                    return bad("noise_types must be nonempty");
                }
            }
            Protocol::DataSelection(p) => {
                if p.densities.is_empty() || p.densities.iter().any(|d| !(0.0..=1.0).contains(d)) {
                    return bad("densities must be a nonempty list in [0, 1]");
                }
                if p.horizon == 0
                    || p.per_round == 0
                    || p.policies.is_empty()
                    || p.test_per_region == 0
                {
                    return bad("selection needs horizon, per_round, policies and a test set");
                }
            }
        }
        Ok(())
    }

    pub fn resolved_spec(&self) -> Result<MixtureSpec> {
        match &self.spec {
            Some(s) => Ok(s.clone()),
            None => paper_spec(self.mean_seed),
        }
    }

    /// SHA-256 of the config with seeds and output path removed, so runs over
    /// different seed sets of the same protocol aggregate together.
    pub fn config_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.seeds.clear();
        c.output = None;
        json_hash(&c)
    }
}

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn json_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `c = 5`, `d_easy = d_hard = 20`, means from `U(0,1)`.
pub fn paper_spec(mean_seed: u64) -> Result<MixtureSpec> {
    MixtureSpec::with_uniform_means(
        20,
        20,
        5.0,
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        (0.0, 1.0),
        mean_seed,
    )
}

/// Weak, w2s and strong accuracies for one region at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub x: usize,
    pub seed: u64,
    pub region: Region,
    pub weak_acc: f64,
    pub w2s_acc: f64,
    pub strong_acc: f64,
    pub n_train: usize,
    /// False when the w2s training set was empty and the all-zero model was scored.
    pub w2s_trained: bool,
}

/// What one seed shares across the settings of a sweep point.
pub struct PointContext {
    pub d_easy: usize,
    /// D_w2s with the weak model's pseudolabels.
    pub w2s_data: RegionDataset,
    pub test: RegionDataset,
    pub weak: LogisticModel,
    pub weak_acc: RegionAccuracy,
    pub strong_acc: RegionAccuracy,
}

pub fn prepare_point(
    spec: &MixtureSpec,
    counts: RegionCounts,
    seed: u64,
    test_per_region: usize,
    train: &TrainConfig,
) -> Result<PointContext> {
    let d_easy = spec.d_easy;
    let mode = GenerationMode::Gaussian;
    let d_train = sample_dataset(spec, counts, mode, derive_seed(seed, &[ROLE_TRAIN]))?;
    let d_w2s = sample_dataset(spec, counts, mode, derive_seed(seed, &[ROLE_W2S]))?;
    let n = test_per_region;
    let test = sample_dataset(
        spec,
        RegionCounts::new(n, n, n),
        mode,
        derive_seed(seed, &[ROLE_TEST]),
    )?;
    let (weak, _) = train_on_dataset(&d_train, LabelSource::TrueLabels, Some(d_easy), train)?;
    let weak_acc = region_accuracy(&weak, &test, LabelSource::TrueLabels, Some(d_easy))?;
    let (strong, _) = train_on_dataset(&d_w2s, LabelSource::TrueLabels, None, train)?;
    let strong_acc = region_accuracy(&strong, &test, LabelSource::TrueLabels, None)?;
    let w2s_data = pseudolabel(&weak, &d_w2s, Some(d_easy))?;
    Ok(PointContext {
        d_easy,
        w2s_data,
        test,
        weak,
        weak_acc,
        strong_acc,
    })
}

/// First `(easy, hard, overlap)` rows of each region of D_w2s.
pub fn leading_rows(data: &RegionDataset, take: (usize, usize, usize)) -> Vec<usize> {
    let mut idx = Vec::new();
    for (region, k) in [
        (Region::EasyOnly, take.0),
        (Region::HardOnly, take.1),
        (Region::Overlap, take.2),
    ] {
        idx.extend(data.indices_of(region).into_iter().take(k));
    }
    idx.sort_unstable();
    idx
}

fn untrained(dim: usize) -> LogisticModel {
    LogisticModel {
        theta: vec![0.0; dim],
        use_bias: false,
        trained_on_projection: false,
    }
}

/// Fit the w2s model on pseudolabeled rows `idx` and score it on the test set.
pub fn w2s_accuracy(
    ctx: &PointContext,
    idx: &[usize],
    train: &TrainConfig,
) -> Result<(RegionAccuracy, bool)> {
    let (model, trained) = if idx.is_empty() {
        (untrained(ctx.w2s_data.dim()), false)
    } else {
        (
            train_on_dataset(
                &ctx.w2s_data.subset(idx),
                LabelSource::Pseudolabels,
                None,
                train,
            )?
            .0,
            true,
        )
    };
    Ok((
        region_accuracy(&model, &ctx.test, LabelSource::TrueLabels, None)?,
        trained,
    ))
}

fn push_rows(
    rows: &mut Vec<AccuracyRow>,
    x: usize,
    seed: u64,
    ctx: &PointContext,
    w2s: &RegionAccuracy,
    n_train: usize,
    trained: bool,
) {
    for region in Region::ALL {
        rows.push(AccuracyRow {
            x,
            seed,
            region,
            weak_acc: ctx.weak_acc.get(region).unwrap_or(f64::NAN),
            w2s_acc: w2s.get(region).unwrap_or(f64::NAN),
            strong_acc: ctx.strong_acc.get(region).unwrap_or(f64::NAN),
            n_train,
            w2s_trained: trained,
        });
    }
}

fn sweep(start: usize, step: usize, max: usize) -> Vec<usize> {
    (start..=max).step_by(step).collect()
}

pub fn run_mechanism_sweep(
    spec: &MixtureSpec,
    p: &SweepParams,
    seeds: &[u64],
    train: &TrainConfig,
) -> Result<Vec<AccuracyRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        for n_ov in sweep(p.overlap_start, p.overlap_step, p.overlap_max) {
            let ctx = prepare_point(
                spec,
                RegionCounts::new(p.n_easy, p.n_hard, n_ov),
                seed,
                p.test_per_region,
                train,
            )?;
            let idx = if p.detected {
                let cfg = DetectConfig {
                    project_easy: Some(ctx.d_easy),
                    ..DetectConfig::default()
                };
                detect(&ctx.w2s_data, &ctx.weak, &cfg)
                    .map(|r| r.overlap_idx)
                    .unwrap_or_default()
            } else {
                ctx.w2s_data.indices_of(Region::Overlap)
            };
            let (acc, trained) = w2s_accuracy(&ctx, &idx, train)?;
            push_rows(&mut rows, n_ov, seed, &ctx, &acc, idx.len(), trained);
        }
    }
    Ok(rows)
}

/// `target` is the region that grows and that the w2s model is trained on.
pub fn run_easy_hard_ablation(
    spec: &MixtureSpec,
    p: &AblationParams,
    target: Region,
    seeds: &[u64],
    train: &TrainConfig,
) -> Result<Vec<AccuracyRow>> {
    let counts = |n: usize| match target {
        Region::EasyOnly => Ok(RegionCounts::new(n, p.n_fixed, p.n_overlap)),
        Region::HardOnly => Ok(RegionCounts::new(p.n_fixed, n, p.n_overlap)),
        Region::Overlap => Err(Error::InvalidInput(
            "ablation target must be easy or hard".into(),
        )),
    };
    let mut rows = Vec::new();
    for &seed in seeds {
        for i in 0..=p.increments {
            let n = p.start + i * p.step;
            let ctx = prepare_point(spec, counts(n)?, seed, p.test_per_region, train)?;
            let idx = ctx.w2s_data.indices_of(target);
            let (acc, trained) = w2s_accuracy(&ctx, &idx, train)?;
            push_rows(&mut rows, n, seed, &ctx, &acc, idx.len(), trained);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub noise_type: NoiseType,
    pub epsilon: f64,
    pub row: AccuracyRow,
}

pub fn run_noise_ablation(
    spec: &MixtureSpec,
    p: &NoiseParams,
    seeds: &[u64],
    train: &TrainConfig,
) -> Result<Vec<NoiseRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        for n_ov in sweep(p.overlap_start, p.overlap_step, p.overlap_max) {
            let ctx = prepare_point(
                spec,
                RegionCounts::new(p.n_easy, p.n_hard, n_ov),
                seed,
                p.test_per_region,
                train,
            )?;
            for &noise_type in &p.noise_types {
                for &epsilon in &p.epsilons {
                    let take = noise_type.composition(epsilon, n_ov);
                    let idx = leading_rows(&ctx.w2s_data, take);
                    let (acc, trained) = w2s_accuracy(&ctx, &idx, train)?;
                    let mut block = Vec::with_capacity(3);
                    push_rows(&mut block, n_ov, seed, &ctx, &acc, idx.len(), trained);
                    rows.extend(block.into_iter().map(|row| NoiseRow {
                        noise_type,
                        epsilon,
                        row,
                    }));
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub round: usize,
    pub policy: Policy,
    pub seed: u64,
    pub source: usize,
    pub o_bar: f64,
    pub true_density: f64,
    pub regret: f64,
    pub bound: f64,
    /// Hard-region accuracy of a w2s model fit on the pooled detected overlap,
    /// every `checkpoint_every` rounds and at the last round.
    pub w2s_hard_acc: Option<f64>,
}

pub fn policy_name(p: Policy) -> &'static str {
    match p {
        Policy::Ucb => "ucb",
        Policy::Random => "random",
        Policy::Best => "oracle",
    }
}

pub fn run_data_selection(
    spec: &MixtureSpec,
    p: &SelectionParams,
    seeds: &[u64],
    train: &TrainConfig,
) -> Result<Vec<SelectionRow>> {
    let d_easy = spec.d_easy;
    let mode = GenerationMode::Gaussian;
    let [we, wh, wo] = p.weak_train;
    let mut rows = Vec::new();
    for &seed in seeds {
        let d_train = sample_dataset(
            spec,
            RegionCounts::new(we, wh, wo),
            mode,
            derive_seed(seed, &[ROLE_TRAIN]),
        )?;
        let (weak, _) = train_on_dataset(&d_train, LabelSource::TrueLabels, Some(d_easy), train)?;
        let n = p.test_per_region;
        let checkpoints: Vec<usize> = if p.checkpoint_every == 0 {
            Vec::new()
        } else {
            (1..=p.horizon)
                .filter(|t| t % p.checkpoint_every == 0 || *t == p.horizon)
                .collect()
        };
        let test = if checkpoints.is_empty() {
            None
        } else {
            Some(sample_dataset(
                spec,
                RegionCounts::new(n, n, n),
                mode,
                derive_seed(seed, &[ROLE_TEST]),
            )?)
        };
        let detector = match p.detector {
            DetectorKind::Oracle => Detector::Oracle,
            DetectorKind::Detect => Detector::Detect {
                weak_model: weak.clone(),
                config: DetectConfig {
                    project_easy: Some(d_easy),
                    ..DetectConfig::default()
                },
            },
        };
        for &policy in &p.policies {
            let mut sources = boxed(sources_with_densities(spec, &p.densities, mode)?);
            let cfg = SelectionConfig {
                horizon: p.horizon,
                per_round: p.per_round,
                policy,
                keep_pool: test.is_some(),
            };
            let run = run_selection(
                &mut sources,
                &cfg,
                &detector,
                derive_seed(seed, &[ROLE_SELECT]),
            )?;
            for tr in &run.trace {
                let mut w2s_hard_acc = None;
                if let (Some(test), Some(pool)) = (&test, &run.pooled) {
                    if checkpoints.contains(&tr.round) {
                        let upto = tr.round * p.per_round;
                        let idx: Vec<usize> = run
                            .pooled_overlap
                            .iter()
                            .copied()
                            .filter(|&i| i < upto)
                            .collect();
                        let model = if idx.is_empty() {
                            untrained(spec.dim())
                        } else {
                            let labeled = pseudolabel(&weak, &pool.subset(&idx), Some(d_easy))?;
                            train_on_dataset(&labeled, LabelSource::Pseudolabels, None, train)?.0
                        };
                        w2s_hard_acc =
                            region_accuracy(&model, test, LabelSource::TrueLabels, None)?.hard;
                    }
                }
                rows.push(SelectionRow {
                    round: tr.round,
                    policy,
                    seed,
                    source: tr.source,
                    o_bar: tr.o_bar,
                    true_density: tr.true_density,
                    regret: tr.regret,
                    bound: tr.bound,
                    w2s_hard_acc,
                });
            }
        }
    }
    Ok(rows)
}

/// String table with a header, as written to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn num(v: f64) -> String {
    format!("{v}")
}

impl Table {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Table> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| Ok(rec?.iter().map(String::from).collect()))
            .collect::<Result<_>>()?;
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn accuracy_table(x_name: &str, rows: &[AccuracyRow]) -> Table {
    let header = [
        x_name,
        "seed",
        "region",
        "weak_acc",
        "w2s_acc",
        "strong_acc",
        "n_train",
        "w2s_trained",
    ];
    Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.x.to_string(),
                    r.seed.to_string(),
                    r.region.as_str().to_string(),
                    num(r.weak_acc),
                    num(r.w2s_acc),
                    num(r.strong_acc),
                    r.n_train.to_string(),
                    r.w2s_trained.to_string(),
                ]
            })
            .collect(),
    }
}

pub fn noise_table(rows: &[NoiseRow]) -> Table {
    let base = accuracy_table(
        "overlap_count",
        &rows.iter().map(|r| r.row).collect::<Vec<_>>(),
    );
    let mut header = vec!["noise_type".to_string(), "epsilon".to_string()];
    header.extend(base.header);
    let rows = rows
        .iter()
        .zip(base.rows)
        .map(|(r, b)| {
            let mut v = vec![r.noise_type.as_str().to_string(), num(r.epsilon)];
            v.extend(b);
            v
        })
        .collect();
    Table { header, rows }
}

pub fn selection_table(rows: &[SelectionRow]) -> Table {
    let header = [
        "round",
        "policy",
        "seed",
        "source",
        "o_bar",
        "true_density",
        "regret",
        "bound",
        "w2s_hard_acc",
    ];
    Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.round.to_string(),
                    policy_name(r.policy).to_string(),
                    r.seed.to_string(),
                    r.source.to_string(),
                    num(r.o_bar),
                    num(r.true_density),
                    num(r.regret),
                    num(r.bound),
                    r.w2s_hard_acc.map(num).unwrap_or_default(),
                ]
            })
            .collect(),
    }
}

/// Written next to every raw CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub artifact_version: String,
    /// Columns `emit_summary` groups by; anything else that is not a metric is dropped.
    pub key_columns: Vec<String>,
    /// Columns averaged by `emit_summary`.
    pub metric_columns: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub table: Table,
}

const ACCURACY_METRICS: [&str; 4] = ["weak_acc", "w2s_acc", "strong_acc", "n_train"];
const SELECTION_METRICS: [&str; 5] = ["o_bar", "true_density", "regret", "bound", "w2s_hard_acc"];

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let spec = config.resolved_spec()?;
    let (seeds, train) = (&config.seeds, &config.train);
    let (table, keys, metrics): (Table, &[&str], &[&str]) = match &config.protocol {
        Protocol::MechanismSweep(p) => (
            accuracy_table(
                "overlap_count",
                &run_mechanism_sweep(&spec, p, seeds, train)?,
            ),
            &["overlap_count", "region"],
            &ACCURACY_METRICS,
        ),
        Protocol::EasyAblation(p) => (
            accuracy_table(
                "easy_count",
                &run_easy_hard_ablation(&spec, p, Region::EasyOnly, seeds, train)?,
            ),
            &["easy_count", "region"],
            &ACCURACY_METRICS,
        ),
        Protocol::HardAblation(p) => (
            accuracy_table(
                "hard_count",
                &run_easy_hard_ablation(&spec, p, Region::HardOnly, seeds, train)?,
            ),
            &["hard_count", "region"],
            &ACCURACY_METRICS,
        ),
        Protocol::NoiseAblation(p) => (
            noise_table(&run_noise_ablation(&spec, p, seeds, train)?),
            &["noise_type", "epsilon", "overlap_count", "region"],
            &ACCURACY_METRICS,
        ),
        Protocol::DataSelection(p) => (
            selection_table(&run_data_selection(&spec, p, seeds, train)?),
            &["round", "policy"],
            &SELECTION_METRICS,
        ),
    };
    let manifest = RunManifest {
        experiment: config.protocol.name().to_string(),
        config_hash: config.config_hash()?,
        seeds: seeds.clone(),
        artifact_version: ARTIFACT_VERSION.to_string(),
        key_columns: keys.iter().map(|s| s.to_string()).collect(),
        metric_columns: metrics.iter().map(|s| s.to_string()).collect(),
    };
    Ok(RunOutput { manifest, table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryManifest {
    pub experiment: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub artifact_version: String,
    pub runs: usize,
}

/// Mean and standard deviation over seeds of every metric, per key.
pub fn emit_summary(runs: &[RunOutput]) -> Result<(Table, SummaryManifest)> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to summarize".into()))?;
    for r in runs {
        if r.manifest.config_hash != first.manifest.config_hash
            || r.table.header != first.table.header
            || r.manifest.metric_columns != first.manifest.metric_columns
            || r.manifest.key_columns != first.manifest.key_columns
        {
            return Err(Error::MixedConfigs);
        }
    }
    let header = &first.table.header;
    let metric_idx: Vec<usize> = first
        .manifest
        .metric_columns
        .iter()
        .map(|m| {
            first
                .table
                .column(m)
                .ok_or_else(|| Error::InvalidInput(format!("missing metric column {m}")))
        })
        .collect::<Result<_>>()?;
    let key_idx: Vec<usize> = first
        .manifest
        .key_columns
        .iter()
        .map(|k| {
            first
                .table
                .column(k)
                .ok_or_else(|| Error::InvalidInput(format!("missing key column {k}")))
        })
        .collect::<Result<_>>()?;

    // groups in first-appearance order
    let mut keys: Vec<Vec<String>> = Vec::new();
    let mut values: Vec<Vec<Vec<f64>>> = Vec::new();
    for row in runs.iter().flat_map(|r| &r.table.rows) {
        let key: Vec<String> = key_idx.iter().map(|&i| row[i].clone()).collect();
        let g = match keys.iter().position(|k| *k == key) {
            Some(g) => g,
            None => {
                keys.push(key);
                values.push(vec![Vec::new(); metric_idx.len()]);
                keys.len() - 1
            }
        };
        for (m, &i) in metric_idx.iter().enumerate() {
            if !row[i].is_empty() {
                let v: f64 = row[i]
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("non-numeric metric {:?}", row[i])))?;
                values[g][m].push(v);
            }
        }
    }

    let mut out_header: Vec<String> = key_idx.iter().map(|&i| header[i].clone()).collect();
    out_header.push("n".into());
    for &i in &metric_idx {
        out_header.push(format!("{}_mean", header[i]));
        out_header.push(format!("{}_std", header[i]));
    }
    let rows = keys
        .into_iter()
        .zip(values)
        .map(|(mut key, vals)| {
            key.push(vals.iter().map(Vec::len).max().unwrap_or(0).to_string());
            for v in &vals {
                if v.is_empty() {
                    key.extend([String::new(), String::new()]);
                } else {
                    let (m, s) = mean_std(v);
                    key.extend([num(m), num(s)]);
                }
            }
            key
        })
        .collect();
    let seeds: BTreeSet<u64> = runs
        .iter()
        .flat_map(|r| r.manifest.seeds.iter().copied())
        .collect();
    let manifest = SummaryManifest {
        experiment: first.manifest.experiment.clone(),
        config_hash: first.manifest.config_hash.clone(),
        seeds: seeds.into_iter().collect(),
        artifact_version: ARTIFACT_VERSION.to_string(),
        runs: runs.len(),
    };
    Ok((
        Table {
            header: out_header,
            rows,
        },
        manifest,
    ))
}
