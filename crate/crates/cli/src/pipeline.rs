//! Shared steps: reading datasets, standardising, and choosing kernels.

use std::path::Path;

use anyhow::Context;
use clap::{Args, ValueEnum};
use condcomp::compressors::sample_indices;
use condcomp::data::{load_csv, standardize, LabelledDataset, Standardisation};
use condcomp::rng::stream;
use condcomp::{median_heuristic, KernelFamily, KernelPair, KernelSpec, Points};
use serde::{Deserialize, Serialize};

use crate::config::{usage, CliError};

/// Median-heuristic lengthscales use at most this many points.
pub const MEDIAN_SUBSAMPLE: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Gaussian,
    Imq,
}

impl From<KernelChoice> for KernelFamily {
    fn from(k: KernelChoice) -> Self {
        match k {
            KernelChoice::Gaussian => KernelFamily::Gaussian,
            KernelChoice::Imq => KernelFamily::InverseMultiquadric,
        }
    }
}

/// Column selection and kernel options shared by `compress` and `eval`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(default)]
pub struct DataOpts {
    /// Feature columns (default: every column but the last).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Response columns (default: the last column).
    #[arg(long, value_delimiter = ',')]
    pub responses: Option<Vec<String>>,
    /// Treat the single response column as integer class labels.
    #[arg(long)]
    pub discrete: bool,
    /// Kernel family on features and continuous responses.
    #[arg(long, value_enum)]
    pub kernel: Option<KernelChoice>,
    /// Feature lengthscale (default: median heuristic).
    #[arg(long)]
    pub lengthscale_x: Option<f64>,
    /// Response lengthscale (default: median heuristic).
    #[arg(long)]
    pub lengthscale_y: Option<f64>,
    /// Work in the original units instead of standardised coordinates.
    #[arg(long)]
    pub no_standardize: bool,
}

impl DataOpts {
    pub fn columns(&self, path: &Path) -> Result<(Vec<String>, Vec<String>), CliError> {
        let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let responses = match &self.responses {
            Some(r) => r.clone(),
            None => vec![header.last().cloned().ok_or_else(|| usage(format!("{} has no columns", path.display())))?],
        };
        let features = match &self.features {
            Some(f) => f.clone(),
            None => header.iter().filter(|h| !responses.contains(h)).cloned().collect(),
        };
        if features.is_empty() {
            return Err(usage("no feature columns selected"));
        }
        Ok((features, responses))
    }

    pub fn load(&self, path: &Path, discrete: bool) -> Result<LabelledDataset, CliError> {
        let (f, r) = self.columns(path)?;
        let f: Vec<&str> = f.iter().map(String::as_str).collect();
        let r: Vec<&str> = r.iter().map(String::as_str).collect();
        load_csv(path, &f, &r, discrete).with_context(|| format!("cannot load {}", path.display())).map_err(Into::into)
    }
}

/// Data as the algorithms see it, plus the transform back.
pub struct Prepared {
    pub data: LabelledDataset,
    pub kernels: KernelPair,
}

impl Prepared {
    pub fn new(raw: &LabelledDataset, opts: &DataOpts, seed: u64) -> Result<Self, CliError> {
        let data = if opts.no_standardize { raw.clone() } else { standardize(raw, None)? };
        let kernels = choose_kernels(&data, opts, seed)?;
        Ok(Self { data, kernels })
    }

    /// Maps another dataset with the same columns into working coordinates.
    pub fn transform(&self, other: &LabelledDataset) -> LabelledDataset {
        match &self.data.standardisation {
            Some(s) => apply(s, other),
            None => other.clone(),
        }
    }

    /// Maps working-coordinate points back to the original units.
    pub fn restore(&self, features: &Points, responses: &Points) -> (Points, Points) {
        match &self.data.standardisation {
            Some(s) => (s.features.invert(features), s.responses.invert(responses)),
            None => (features.clone(), responses.clone()),
        }
    }
}

fn apply(s: &Standardisation, other: &LabelledDataset) -> LabelledDataset {
    let mut out = other.clone();
    out.features = s.features.apply(&other.features);
    out.responses = s.responses.apply(&other.responses);
    out.standardisation = Some(s.clone());
    out
}

/// Median heuristic on a deterministic subsample.
pub fn median_lengthscale(points: &Points, seed: u64, name: &str) -> Result<f64, CliError> {
    let mut rng = stream(seed, name);
    let idx = sample_indices(&mut rng, points.len(), MEDIAN_SUBSAMPLE);
    Ok(median_heuristic(&points.select(&idx), false)?)
}

pub fn choose_kernels(data: &LabelledDataset, opts: &DataOpts, seed: u64) -> Result<KernelPair, CliError> {
    let family: KernelFamily = opts.kernel.unwrap_or(KernelChoice::Gaussian).into();
    let lx = match opts.lengthscale_x {
        Some(l) => l,
        None => median_lengthscale(&data.features, seed, "median-x")?,
    };
    let feature = KernelSpec::new(family, lx).map_err(|e| usage(e.to_string()))?;
    let response = if data.discrete {
        KernelSpec::indicator()
    } else {
        let ly = match opts.lengthscale_y {
            Some(l) => l,
            None => median_lengthscale(&data.responses, seed, "median-y")?,
        };
        KernelSpec::new(family, ly).map_err(|e| usage(e.to_string()))?
    };
    Ok(KernelPair::new(feature, response))
}

pub fn write_points(
    path: &Path,
    feature_names: &[String],
    features: &Points,
    response_names: &[String],
    responses: &Points,
) -> anyhow::Result<()> {
    crate::config::ensure_parent(path)?;
    let file = std::fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    condcomp::data::write_points_csv(file, feature_names, features, response_names, responses)?;
    Ok(())
}
