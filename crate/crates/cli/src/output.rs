use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;

use overlap_core::experiments::{json_hash, Table, ARTIFACT_VERSION};

use crate::Global;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A verifier found at least one bound violation.
#[derive(Debug)]
pub struct Violations(pub usize);

impl std::fmt::Display for Violations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} verification violation(s)", self.0)
    }
}

impl std::error::Error for Violations {}

/// Reads the `--config` file, or the default when none was given.
pub fn load_config<T: DeserializeOwned + Default>(g: &Global) -> anyhow::Result<T> {
    match &g.config {
        None => Ok(T::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            Ok(serde_json::from_str(&text)
                .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?)
        }
    }
}

pub fn out_dir(g: &Global, fallback: Option<&str>) -> anyhow::Result<PathBuf> {
    let dir = g
        .out
        .clone()
        .or_else(|| fallback.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn write_table(dir: &Path, stem: &str, table: &Table) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!("{stem}.csv"));
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    table.write_csv(BufWriter::new(f))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

/// Manifest for the commands that are not seed-swept experiments.
#[derive(Debug, Serialize)]
pub struct CommandManifest<'a, C: Serialize, S: Serialize> {
    pub command: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub artifact_version: &'a str,
    pub config: &'a C,
    pub summary: S,
}

pub fn finish<C: Serialize, S: Serialize>(
    dir: &Path,
    stem: &str,
    command: &str,
    seed: u64,
    config: &C,
    table: &Table,
    summary: S,
) -> anyhow::Result<()> {
    let csv = write_table(dir, stem, table)?;
    let manifest = CommandManifest {
        command,
        config_hash: json_hash(config)?,
        seed,
        artifact_version: ARTIFACT_VERSION,
        config,
        summary,
    };
    write_json(&manifest_path(&csv), &manifest)?;
    println!("wrote {}", csv.display());
    Ok(())
}

pub fn num(v: f64) -> String {
    format!("{v}")
}
