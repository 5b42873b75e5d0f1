//! Label-conditioned Gaussian mixtures with easy-only, hard-only and overlap
//! regions.
//!
//! A point is `x = [x_easy, x_hard]`. Class `y` draws `x ~ N(y * mu_r, c I)`
//! where `mu_r` is one of
//!
//! ```text
//! mu_easy    = [mu~_easy; 0]
//! mu_hard    = [0; mu~_hard]
//! mu_overlap = [mu~_easy; mu~_hard]
//! ```

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};

/// Which block(s) of features carry signal for a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    #[serde(rename = "easy")]
    EasyOnly,
    #[serde(rename = "hard")]
    HardOnly,
    Overlap,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::EasyOnly, Region::HardOnly, Region::Overlap];

    pub fn index(self) -> usize {
        match self {
            Region::EasyOnly => 0,
            Region::HardOnly => 1,
            Region::Overlap => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::EasyOnly => "easy",
            Region::HardOnly => "hard",
            Region::Overlap => "overlap",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Region::EasyOnly),
            "hard" => Ok(Region::HardOnly),
            "overlap" => Ok(Region::Overlap),
            other => Err(Error::InvalidInput(format!("unknown region '{other}'"))),
        }
    }
}

/// Binary class label in `{-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Neg => -1.0,
            Label::Pos => 1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Neg => -1,
            Label::Pos => 1,
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Neg => Label::Pos,
            Label::Pos => Label::Neg,
        }
    }

    pub fn from_i64(v: i64) -> Result<Label> {
        match v {
            -1 => Ok(Label::Neg),
            1 => Ok(Label::Pos),
            other => Err(Error::InvalidInput(format!(
                "label must be -1 or 1, got {other}"
            ))),
        }
    }
}

/// How the non-signal block of single-pattern points is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    /// Isotropic noise `c I` on every coordinate.
    #[default]
    Gaussian,
    /// Easy block of hard-only rows and hard block of easy-only rows are exactly 0.
    Ideal,
}

/// Parameters of the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub d_easy: usize,
    pub d_hard: usize,
    pub mu_easy_tilde: Vec<f64>,
    pub mu_hard_tilde: Vec<f64>,
    pub variance_c: f64,
    pub pi_easy: f64,
    pub pi_hard: f64,
    pub pi_overlap: f64,
}

impl MixtureSpec {
    pub fn new(
        mu_easy_tilde: Vec<f64>,
        mu_hard_tilde: Vec<f64>,
        variance_c: f64,
        pis: [f64; 3],
    ) -> Result<Self> {
        let spec = MixtureSpec {
            d_easy: mu_easy_tilde.len(),
            d_hard: mu_hard_tilde.len(),
            mu_easy_tilde,
            mu_hard_tilde,
            variance_c,
            pi_easy: pis[0],
            pi_hard: pis[1],
            pi_overlap: pis[2],
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Means drawn coordinate-wise from `U(low, high)`, deterministic in `seed`.
    pub fn with_uniform_means(
        d_easy: usize,
        d_hard: usize,
        variance_c: f64,
        pis: [f64; 3],
        (low, high): (f64, f64),
        seed: u64,
    ) -> Result<Self> {
        if !(low < high) {
            return Err(Error::InvalidSpec(format!(
                "empty mean range [{low}, {high})"
            )));
        }
        let mut rng = rng_for(seed, &[0x6d65_616e]);
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(low..high)).collect() };
        let easy = draw(d_easy);
        let hard = draw(d_hard);
        Self::new(easy, hard, variance_c, pis)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_easy == 0 || self.d_hard == 0 {
            return Err(Error::InvalidSpec(
                "d_easy and d_hard must be at least 1".into(),
            ));
        }
        if self.mu_easy_tilde.len() != self.d_easy || self.mu_hard_tilde.len() != self.d_hard {
            return Err(Error::InvalidSpec(
                "mean lengths must match d_easy / d_hard".into(),
            ));
        }
        if self
            .mu_easy_tilde
            .iter()
            .chain(&self.mu_hard_tilde)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidSpec("means must be finite".into()));
        }
        if !(self.variance_c > 0.0 && self.variance_c.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "variance_c must be > 0, got {}",
                self.variance_c
            )));
        }
        let pis = [self.pi_easy, self.pi_hard, self.pi_overlap];
        if pis.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidSpec(
                "region proportions must lie in [0, 1]".into(),
            ));
        }
        let total: f64 = pis.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "region proportions sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d_easy + self.d_hard
    }

    pub fn proportions(&self) -> [f64; 3] {
        [self.pi_easy, self.pi_hard, self.pi_overlap]
    }

    /// Same means and variance, different region proportions.
    pub fn with_proportions(&self, pis: [f64; 3]) -> Result<Self> {
        let mut spec = self.clone();
        spec.pi_easy = pis[0];
        spec.pi_hard = pis[1];
        spec.pi_overlap = pis[2];
        spec.validate()?;
        Ok(spec)
    }

    pub fn mu_hard_norm_sq(&self) -> f64 {
        self.mu_hard_tilde.iter().map(|v| v * v).sum()
    }

    pub fn mu_easy_norm_sq(&self) -> f64 {
        self.mu_easy_tilde.iter().map(|v| v * v).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: MixtureSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Full-dimension means of the three regions (class `+1`).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMeans {
    pub easy: Vec<f64>,
    pub hard: Vec<f64>,
    pub overlap: Vec<f64>,
}

impl RegionMeans {
    pub fn get(&self, region: Region) -> &[f64] {
        match region {
            Region::EasyOnly => &self.easy,
            Region::HardOnly => &self.hard,
            Region::Overlap => &self.overlap,
        }
    }
}

pub fn assemble_means(spec: &MixtureSpec) -> RegionMeans {
    let zeros_e = vec![0.0; spec.d_easy];
    let zeros_h = vec![0.0; spec.d_hard];
    RegionMeans {
        easy: [spec.mu_easy_tilde.as_slice(), &zeros_h].concat(),
        hard: [zeros_e.as_slice(), &spec.mu_hard_tilde].concat(),
        overlap: [spec.mu_easy_tilde.as_slice(), &spec.mu_hard_tilde].concat(),
    }
}

/// Exact number of rows to draw per region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegionCounts {
    pub easy: usize,
    pub hard: usize,
    pub overlap: usize,
}

impl RegionCounts {
    pub fn new(easy: usize, hard: usize, overlap: usize) -> Self {
        RegionCounts {
            easy,
            hard,
            overlap,
        }
    }

    pub fn total(&self) -> usize {
        self.easy + self.hard + self.overlap
    }

    pub fn get(&self, region: Region) -> usize {
        match region {
            Region::EasyOnly => self.easy,
            Region::HardOnly => self.hard,
            Region::Overlap => self.overlap,
        }
    }
}

/// Row-major feature matrix with per-row labels, region tags and optional
/// pseudolabels.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<Label>,
    regions: Vec<Region>,
    pseudolabels: Option<Vec<Label>>,
}

impl RegionDataset {
    pub fn new(
        dim: usize,
        features: Vec<f64>,
        labels: Vec<Label>,
        regions: Vec<Region>,
        pseudolabels: Option<Vec<Label>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "dataset dimension must be positive".into(),
            ));
        }
        let n = labels.len();
        if features.len() != n * dim {
            return Err(Error::Dimension {
                expected: n * dim,
                got: features.len(),
            });
        }
        if regions.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: regions.len(),
            });
        }
        if let Some(p) = &pseudolabels {
            if p.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: p.len(),
                });
            }
        }
        Ok(RegionDataset {
            dim,
            features,
            labels,
            regions,
            pseudolabels,
        })
    }

    pub fn empty(dim: usize) -> Self {
        RegionDataset {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
            regions: Vec::new(),
            pseudolabels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn pseudolabels(&self) -> Option<&[Label]> {
        self.pseudolabels.as_deref()
    }

    pub fn set_pseudolabels(&mut self, pseudolabels: Vec<Label>) -> Result<()> {
        if pseudolabels.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: pseudolabels.len(),
            });
        }
        self.pseudolabels = Some(pseudolabels);
        Ok(())
    }

    pub fn region_counts(&self) -> RegionCounts {
        let mut counts = RegionCounts::default();
        for r in &self.regions {
            match r {
                Region::EasyOnly => counts.easy += 1,
                Region::HardOnly => counts.hard += 1,
                Region::Overlap => counts.overlap += 1,
            }
        }
        counts
    }

    pub fn indices_of(&self, region: Region) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.regions[i] == region)
            .collect()
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> RegionDataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        RegionDataset {
            dim: self.dim,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            regions: indices.iter().map(|&i| self.regions[i]).collect(),
            pseudolabels: self
                .pseudolabels
                .as_ref()
                .map(|p| indices.iter().map(|&i| p[i]).collect()),
        }
    }

    /// Appends `other`; pseudolabels survive only if both sides carry them
    /// (or `self` is empty).
    pub fn extend(&mut self, other: &RegionDataset) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        let was_empty = self.is_empty();
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
        self.regions.extend_from_slice(&other.regions);
        self.pseudolabels = match (self.pseudolabels.take(), &other.pseudolabels) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
        Ok(())
    }

    /// Features with the hard block zeroed, as seen by the weak model.
    pub fn project_easy(&self, d_easy: usize) -> Result<RegionDataset> {
        if d_easy > self.dim {
            return Err(Error::Dimension {
                expected: d_easy,
                got: self.dim,
            });
        }
        let mut out = self.clone();
        for row in out.features.chunks_exact_mut(self.dim) {
            row[d_easy..].iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.extend(["y", "region", "pseudolabel"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].as_i8().to_string());
            rec.push(self.regions[i].to_string());
            rec.push(
                self.pseudolabels
                    .as_ref()
                    .map(|p| p[i].as_i8().to_string())
                    .unwrap_or_default(),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<RegionDataset> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let dim = header
            .len()
            .checked_sub(3)
            .filter(|&d| d > 0)
            .ok_or_else(|| {
                Error::InvalidInput(
                    "dataset CSV needs x0..x{d-1},y,region,pseudolabel columns".into(),
                )
            })?;
        for (j, name) in header.iter().take(dim).enumerate() {
            if name != format!("x{j}") {
                return Err(Error::InvalidInput(format!(
                    "unexpected column '{name}' at position {j}"
                )));
            }
        }
        if header.iter().skip(dim).collect::<Vec<_>>() != ["y", "region", "pseudolabel"] {
            return Err(Error::InvalidInput(
                "last columns must be y,region,pseudolabel".into(),
            ));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad number '{s}': {e}")))
        };
        let (mut features, mut labels, mut regions, mut pseudo) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut any_pseudo = false;
        let mut all_pseudo = true;
        for rec in r.records() {
            let rec = rec?;
            for j in 0..dim {
                features.push(parse(&rec[j])?);
            }
            labels.push(Label::from_i64(parse(&rec[dim])? as i64)?);
            regions.push(rec[dim + 1].trim().parse::<Region>()?);
            let p = rec[dim + 2].trim();
            if p.is_empty() {
                all_pseudo = false;
                pseudo.push(Label::Neg);
            } else {
                any_pseudo = true;
                pseudo.push(Label::from_i64(parse(p)? as i64)?);
            }
        }
        if any_pseudo && !all_pseudo {
            return Err(Error::InvalidInput(
                "pseudolabel column is partially filled".into(),
            ));
        }
        RegionDataset::new(
            dim,
            features,
            labels,
            regions,
            if any_pseudo { Some(pseudo) } else { None },
        )
    }
}

/// `[x_easy, 0]`.
pub fn project_easy(x: &[f64], d_easy: usize) -> Result<Vec<f64>> {
    if x.len() < d_easy {
        return Err(Error::Dimension {
            expected: d_easy,
            got: x.len(),
        });
    }
    let mut out = x.to_vec();
    out[d_easy..].iter_mut().for_each(|v| *v = 0.0);
    Ok(out)
}

fn draw_row(
    spec: &MixtureSpec,
    means: &RegionMeans,
    region: Region,
    mode: GenerationMode,
    row_seed: u64,
    out: &mut Vec<f64>,
) -> Label {
    let mut rng = rng_for(row_seed, &[]);
    let label = if rng.random::<bool>() {
        Label::Pos
    } else {
        Label::Neg
    };
    let sd = spec.variance_c.sqrt();
    let mean = means.get(region);
    let y = label.sign();
    for (j, m) in mean.iter().enumerate() {
        let z: f64 = StandardNormal.sample(&mut rng);
        let zeroed = mode == GenerationMode::Ideal
            && match region {
                Region::EasyOnly => j >= spec.d_easy,
                Region::HardOnly => j < spec.d_easy,
                Region::Overlap => false,
            };
        out.push(if zeroed { 0.0 } else { y * m + sd * z });
    }
    label
}

/// Draw exactly `counts` rows per region, laid out easy, hard, overlap.
pub fn sample_dataset(
    spec: &MixtureSpec,
    counts: RegionCounts,
    mode: GenerationMode,
    seed: u64,
) -> Result<RegionDataset> {
    spec.validate()?;
    if counts.total() == 0 {
        return Err(Error::EmptyDataset);
    }
    let means = assemble_means(spec);
    let n = counts.total();
    let mut features = Vec::with_capacity(n * spec.dim());
    let mut labels = Vec::with_capacity(n);
    let mut regions = Vec::with_capacity(n);
    for region in Region::ALL {
        for row in 0..counts.get(region) {
            let row_seed = derive_seed(seed, &[region.index() as u64, row as u64]);
            labels.push(draw_row(
                spec,
                &means,
                region,
                mode,
                row_seed,
                &mut features,
            ));
            regions.push(region);
        }
    }
    RegionDataset::new(spec.dim(), features, labels, regions, None)
}

/// Draw `n` rows whose regions are themselves sampled from the spec's
/// proportions. Used by the data-source simulator.
pub fn sample_from_proportions(
    spec: &MixtureSpec,
    n: usize,
    mode: GenerationMode,
    seed: u64,
) -> Result<RegionDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let means = assemble_means(spec);
    let mut features = Vec::with_capacity(n * spec.dim());
    let mut labels = Vec::with_capacity(n);
    let mut regions = Vec::with_capacity(n);
    for row in 0..n {
        let u: f64 = rng_for(seed, &[3, row as u64]).random();
        let region = if u < spec.pi_easy {
            Region::EasyOnly
        } else if u < spec.pi_easy + spec.pi_hard {
            Region::HardOnly
        } else {
            Region::Overlap
        };
        let row_seed = derive_seed(seed, &[4, row as u64]);
        labels.push(draw_row(
            spec,
            &means,
            region,
            mode,
            row_seed,
            &mut features,
        ));
        regions.push(region);
    }
    RegionDataset::new(spec.dim(), features, labels, regions, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_1_2() -> MixtureSpec {
        MixtureSpec::new(vec![1.0], vec![2.0], 1.0, [0.3, 0.3, 0.4]).unwrap()
    }

    #[test]
    fn means_place_zero_blocks() {
        let m = assemble_means(&spec_1_2());
        assert_eq!(m.easy, vec![1.0, 0.0]);
        assert_eq!(m.hard, vec![0.0, 2.0]);
        assert_eq!(m.overlap, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_hard_mean_collapses_overlap_onto_easy() {
        let spec =
            MixtureSpec::new(vec![1.5, -0.5], vec![0.0, 0.0, 0.0], 1.0, [0.2, 0.3, 0.5]).unwrap();
        let m = assemble_means(&spec);
        assert!(m.hard.iter().all(|&v| v == 0.0));
        assert_eq!(m.overlap, m.easy);
    }

    #[test]
    fn random_means_blocks_by_index_mask() {
        let spec =
            MixtureSpec::with_uniform_means(20, 20, 5.0, [0.4, 0.4, 0.2], (-1.0, 1.0), 3).unwrap();
        let m = assemble_means(&spec);
        for j in 0..40 {
            let easy_block = j < 20;
            assert_eq!(m.easy[j] == 0.0, !easy_block);
            assert_eq!(m.hard[j] == 0.0, easy_block);
            let expect = if easy_block {
                spec.mu_easy_tilde[j]
            } else {
                spec.mu_hard_tilde[j - 20]
            };
            assert_eq!(m.overlap[j], expect);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(MixtureSpec::new(vec![1.0], vec![1.0], 0.0, [0.3, 0.3, 0.4]).is_err());
        assert!(MixtureSpec::new(vec![1.0], vec![1.0], 1.0, [0.3, 0.3, 0.3]).is_err());
        assert!(MixtureSpec::new(vec![], vec![1.0], 1.0, [0.3, 0.3, 0.4]).is_err());
        assert!(MixtureSpec::new(vec![1.0], vec![1.0], 1.0, [1.2, -0.2, 0.0]).is_err());
    }

    #[test]
    fn paper_synthetic_setup_tallies() {
        let spec =
            MixtureSpec::with_uniform_means(20, 20, 5.0, [1.0 / 3.0; 3], (0.0, 1.0), 1).unwrap();
        let ds = sample_dataset(
            &spec,
            RegionCounts::new(100, 100, 10),
            GenerationMode::Gaussian,
            9,
        )
        .unwrap();
        assert_eq!(ds.len(), 210);
        assert_eq!(ds.dim(), 40);
        assert_eq!(ds.region_counts(), RegionCounts::new(100, 100, 10));
    }

    #[test]
    fn single_region_request() {
        let ds = sample_dataset(
            &spec_1_2(),
            RegionCounts::new(0, 0, 50),
            GenerationMode::Gaussian,
            0,
        )
        .unwrap();
        assert!(ds.regions().iter().all(|&r| r == Region::Overlap));
    }

    #[test]
    fn empty_request_is_an_error() {
        let err = sample_dataset(
            &spec_1_2(),
            RegionCounts::new(0, 0, 0),
            GenerationMode::Gaussian,
            0,
        );
        assert!(matches!(err, Err(Error::EmptyDataset)));
    }

    #[test]
    fn ideal_mode_zeroes_the_missing_block() {
        let spec =
            MixtureSpec::with_uniform_means(3, 4, 2.0, [0.4, 0.4, 0.2], (0.0, 1.0), 5).unwrap();
        let ds = sample_dataset(
            &spec,
            RegionCounts::new(20, 20, 20),
            GenerationMode::Ideal,
            5,
        )
        .unwrap();
        for i in 0..ds.len() {
            let row = ds.row(i);
            match ds.regions()[i] {
                Region::EasyOnly => assert!(row[3..].iter().all(|&v| v == 0.0)),
                Region::HardOnly => {
                    assert!(row[..3].iter().all(|&v| v == 0.0));
                    assert!(project_easy(row, 3).unwrap().iter().all(|&v| v == 0.0));
                }
                Region::Overlap => assert!(row.iter().all(|&v| v != 0.0)),
            }
        }
    }

    #[test]
    fn same_seed_same_bits_different_seed_differs() {
        let spec = spec_1_2();
        let counts = RegionCounts::new(5, 5, 5);
        let a = sample_dataset(&spec, counts, GenerationMode::Gaussian, 42).unwrap();
        let b = sample_dataset(&spec, counts, GenerationMode::Gaussian, 42).unwrap();
        let c = sample_dataset(&spec, counts, GenerationMode::Gaussian, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.features(), c.features());
    }

    #[test]
    fn project_easy_examples() {
        assert_eq!(
            project_easy(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(),
            vec![1.0, 2.0, 0.0, 0.0]
        );
        assert_eq!(
            project_easy(&[0.0, 0.0, 3.5, -1.0], 2).unwrap(),
            vec![0.0; 4]
        );
        assert!(matches!(
            project_easy(&[1.0], 2),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn csv_round_trip_with_and_without_pseudolabels() {
        let mut ds = sample_dataset(
            &spec_1_2(),
            RegionCounts::new(2, 2, 2),
            GenerationMode::Gaussian,
            1,
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,y,region,pseudolabel\n"));
        assert_eq!(RegionDataset::read_csv(buf.as_slice()).unwrap(), ds);

        ds.set_pseudolabels(vec![Label::Pos; 6]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert_eq!(RegionDataset::read_csv(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn spec_json_uses_field_names() {
        let json = spec_1_2().to_json().unwrap();
        for key in [
            "d_easy",
            "d_hard",
            "mu_easy_tilde",
            "mu_hard_tilde",
            "variance_c",
            "pi_easy",
            "pi_hard",
            "pi_overlap",
        ] {
            assert!(json.contains(&format!("\"{key}\"")), "missing {key}");
        }
        assert_eq!(MixtureSpec::from_json(&json).unwrap(), spec_1_2());
    }

    #[test]
    fn proportion_sampling_tracks_pi() {
        let spec = spec_1_2().with_proportions([0.1, 0.1, 0.8]).unwrap();
        let ds = sample_from_proportions(&spec, 5000, GenerationMode::Gaussian, 2).unwrap();
        let frac = ds.region_counts().overlap as f64 / 5000.0;
        // binomial sd at p=0.8, n=5000 is ~0.0057
        assert!((frac - 0.8).abs() < 4.0 * 0.0057, "{frac}");
    }
}
