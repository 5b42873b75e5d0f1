use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use overlap_core::changepoint::binseg_single;
use overlap_core::detection::{detect as run_detect, detection_report, DetectConfig};
use overlap_core::experiments::{
    emit_summary, paper_spec, run_experiment, AblationParams, ExperimentConfig, NoiseParams,
    Protocol, RunManifest, RunOutput, SelectionParams, SweepParams, Table,
};
use overlap_core::linear::{train_on_dataset, LabelSource, LogisticModel, TrainConfig};
use overlap_core::mixture::{
    sample_dataset, GenerationMode, MixtureSpec, RegionCounts, RegionDataset,
};
use overlap_core::rng::derive_seed;

use crate::output::{
    finish, load_config, manifest_path, num, out_dir, write_json, write_table, ConfigError,
};
use crate::Global;

fn resolve_spec(spec: &Option<MixtureSpec>, mean_seed: u64) -> anyhow::Result<MixtureSpec> {
    Ok(match spec {
        Some(s) => {
            s.validate()?;
            s.clone()
        }
        None => paper_spec(mean_seed)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub spec: Option<MixtureSpec>,
    pub mean_seed: u64,
    pub counts: RegionCounts,
    pub mode: GenerationMode,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            spec: None,
            mean_seed: 0,
            counts: RegionCounts::new(100, 100, 100),
            mode: GenerationMode::Gaussian,
        }
    }
}

pub fn gen_data(g: &Global) -> anyhow::Result<()> {
    let cfg: GenDataConfig = load_config(g)?;
    let seed = g.seed.unwrap_or(0);
    let spec = resolve_spec(&cfg.spec, cfg.mean_seed)?;
    let data = sample_dataset(&spec, cfg.counts, cfg.mode, seed)?;
    let dir = out_dir(g, None)?;
    let path = dir.join("data.csv");
    data.write_csv(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))?;
    let summary = serde_json::json!({ "rows": data.len(), "dim": data.dim(), "spec": spec });
    let manifest = serde_json::json!({
        "command": "gen-data",
        "config_hash": overlap_core::experiments::json_hash(&cfg)?,
        "seed": seed,
        "artifact_version": overlap_core::experiments::ARTIFACT_VERSION,
        "config": cfg,
        "summary": summary,
    });
    write_json(&manifest_path(&path), &manifest)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectCommandConfig {
    pub spec: Option<MixtureSpec>,
    pub mean_seed: u64,
    /// Rows to detect on when no input CSV is given.
    pub counts: RegionCounts,
    /// Weak-model training rows.
    pub train_counts: RegionCounts,
    pub mode: GenerationMode,
    pub detect: DetectConfig,
    pub train: TrainConfig,
}

impl Default for DetectCommandConfig {
    fn default() -> Self {
        DetectCommandConfig {
            spec: None,
            mean_seed: 0,
            counts: RegionCounts::new(300, 300, 300),
            train_counts: RegionCounts::new(100, 100, 100),
            mode: GenerationMode::Gaussian,
            detect: DetectConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

pub fn detect(g: &Global, input: Option<&Path>, model: Option<&Path>) -> anyhow::Result<()> {
    let mut cfg: DetectCommandConfig = load_config(g)?;
    let seed = g.seed.unwrap_or(0);
    let spec = resolve_spec(&cfg.spec, cfg.mean_seed)?;
    cfg.detect.project_easy.get_or_insert(spec.d_easy);
    let data = match input {
        Some(p) => RegionDataset::read_csv(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )?,
        None => sample_dataset(&spec, cfg.counts, cfg.mode, derive_seed(seed, &[2]))?,
    };
    let dir = out_dir(g, None)?;
    let weak = match model {
        Some(p) => LogisticModel::from_json(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => {
            let train =
                sample_dataset(&spec, cfg.train_counts, cfg.mode, derive_seed(seed, &[1]))?;
            let (weak, _) = train_on_dataset(
                &train,
                LabelSource::TrueLabels,
                Some(spec.d_easy),
                &cfg.train,
            )?;
            fs::write(dir.join("weak_model.json"), weak.to_json()? + "\n")?;
            weak
        }
    };
    let res = run_detect(&data, &weak, &cfg.detect)?;
    let report = detection_report(&res, &data)?;
    let predicted = res.assignments();
    let table = Table {
        header: [
            "index",
            "region",
            "assigned_region",
            "confidence",
            "overlap_score",
        ]
        .map(String::from)
        .to_vec(),
        rows: (0..data.len())
            .map(|i| {
                vec![
                    i.to_string(),
                    data.regions()[i].as_str().to_string(),
                    predicted[i].as_str().to_string(),
                    num(res.confidence_scores[i]),
                    res.overlap_scores[i].map(num).unwrap_or_default(),
                ]
            })
            .collect(),
    };
    let summary = serde_json::json!({ "tau_hard": res.tau_hard, "tau_overlap": res.tau_overlap, "report": report });
    finish(
        &dir,
        "detect",
        "detect",
        seed,
        &cfg,
        &table,
        summary,
    )
}

pub fn changepoint(
    g: &Global,
    input: &Path,
    column: &str,
    min_segment: usize,
) -> anyhow::Result<()> {
    let table = Table::read_csv(
        File::open(input).with_context(|| format!("opening {}", input.display()))?,
    )?;
    let col = table
        .column(column)
        .ok_or_else(|| ConfigError(format!("no column {column:?} in {}", input.display())))?;
    let scores: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| !r[col].is_empty())
        .map(|r| {
            r[col]
                .parse::<f64>()
                .with_context(|| format!("non-numeric value {:?}", r[col]))
        })
        .collect::<anyhow::Result<_>>()?;
    let cp = binseg_single(&scores, min_segment)?;
    let out = Table {
        header: ["column", "n", "split_index", "threshold", "cost_reduction"]
            .map(String::from)
            .to_vec(),
        rows: vec![vec![
            column.to_string(),
            scores.len().to_string(),
            cp.split_index.to_string(),
            num(cp.threshold),
            num(cp.cost_reduction),
        ]],
    };
    let cfg = serde_json::json!({ "input": input.display().to_string(), "column": column, "min_segment": min_segment });
    finish(
        &out_dir(g, None)?,
        "changepoint",
        "changepoint",
        g.seed.unwrap_or(0),
        &cfg,
        &out,
        cp,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Mechanism,
    EasyAblation,
    HardAblation,
    Noise,
    Selection,
}

impl Which {
    fn default_protocol(self) -> Protocol {
        match self {
            Which::Mechanism => Protocol::MechanismSweep(SweepParams::default()),
            Which::EasyAblation => Protocol::EasyAblation(AblationParams::default()),
            Which::HardAblation => Protocol::HardAblation(AblationParams::default()),
            Which::Noise => Protocol::NoiseAblation(NoiseParams::default()),
            Which::Selection => Protocol::DataSelection(SelectionParams::default()),
        }
    }
}

pub fn experiment(g: &Global, which: Which, detected: bool) -> anyhow::Result<()> {
    let expected = which.default_protocol();
    let mut cfg = match &g.config {
        None => ExperimentConfig::new(expected.clone()),
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)?
        }
    };
    if cfg.protocol.name() != expected.name() {
        return Err(ConfigError(format!(
            "config is for {}, this command runs {}",
            cfg.protocol.name(),
            expected.name()
        ))
        .into());
    }
    if let Some(s) = g.seed {
        cfg.seeds = vec![s];
    }
    if detected {
        match &mut cfg.protocol {
            Protocol::MechanismSweep(p) => p.detected = true,
            _ => unreachable!("--detected only exists on mechanism"),
        }
    }
    let out = run_experiment(&cfg)?;
    let dir = out_dir(g, cfg.output.as_deref())?;
    let csv = write_table(&dir, &out.manifest.experiment, &out.table)?;
    write_json(&manifest_path(&csv), &out.manifest)?;
    println!("wrote {}", csv.display());
    Ok(())
}

pub fn summarize(g: &Global, runs: &[PathBuf]) -> anyhow::Result<()> {
    let outputs = runs
        .iter()
        .map(|p| {
            let table = Table::read_csv(
                File::open(p).with_context(|| format!("opening {}", p.display()))?,
            )?;
            let mp = manifest_path(p);
            let text =
                fs::read_to_string(&mp).with_context(|| format!("reading {}", mp.display()))?;
            let manifest: RunManifest =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", mp.display()))?;
            Ok(RunOutput { manifest, table })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let (table, manifest) = emit_summary(&outputs)?;
    let dir = out_dir(g, None)?;
    let csv = write_table(&dir, "summary", &table)?;
    write_json(&manifest_path(&csv), &manifest)?;
    println!("wrote {}", csv.display());
    Ok(())
}
