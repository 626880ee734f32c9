use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use condcomp::compressors::{compress, CompressedSet, CompressionConfig, Method};
use condcomp::Optimiser;
use serde::{Deserialize, Serialize};

use crate::config::{ensure_parent, output_path, required, resolve, sibling, usage, CliError};
use crate::pipeline::{write_points, DataOpts, Prepared};

/// Regulariser used when none is given.
pub const DEFAULT_LAMBDA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OptimiserChoice {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    /// JSON file with any of the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: CompressOpts,
}

/// Compression settings shared with `benchmark`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(default)]
pub struct MethodOpts {
    /// Candidate pairs or subsets drawn per selection.
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Gradient iterations (0 keeps the best candidate unrefined).
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Regulariser of the conditional methods.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub optimiser: Option<OptimiserChoice>,
    /// Relative decrease below which an iteration counts as stalled.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Stalled iterations tolerated before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
}

impl MethodOpts {
    pub fn config(&self, method: Method, m: usize, seed: u64) -> Result<CompressionConfig, CliError> {
        let mut c = CompressionConfig::new(method, m);
        c.seed = seed;
        if let Some(v) = self.candidates {
            c.candidate_count = v;
        }
        if let Some(v) = self.iters {
            c.max_iters = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.tol {
            c.tol = v;
        }
        if let Some(v) = self.patience {
            c.patience = v;
        }
        c.optimiser = match self.optimiser {
            Some(OptimiserChoice::Sgd) => Optimiser::Sgd,
            _ => Optimiser::adam(),
        };
        if method.is_conditional() {
            c.lambda = Some(self.lambda.unwrap_or(DEFAULT_LAMBDA));
        }
        c.validate().map_err(|e| usage(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(default)]
pub struct CompressOpts {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// One of JKH, JKIP, ACKH, ACKIP, JKH_GradFree, ACKH_GradFree,
    /// JKIP_Discrete, ACKIP_Discrete (case-insensitive).
    #[arg(long)]
    pub method: Option<Method>,
    /// Size of the compressed set.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub method_opts: MethodOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub data_opts: DataOpts,
    /// Output CSV (default: `compressed.csv` in the output directory). The
    /// objective trace goes to `<stem>.trace.csv` beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn write_trace(path: &Path, set: &CompressedSet) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["step", "objective"])?;
    for (i, v) in set.objective_trace.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: CompressArgs, out_dir: &Path) -> Result<(), CliError> {
    let opts = resolve(&args.opts, args.config.as_deref())?;
    let data_path = required(opts.data.clone(), "data")?;
    let method = required(opts.method, "method")?;
    let m = required(opts.m, "m")?;
    let seed = opts.seed.unwrap_or(0);
    let config = opts.method_opts.config(method, m, seed)?;
    let discrete = opts.data_opts.discrete || method.is_discrete();
    let raw = opts.data_opts.load(&data_path, discrete)?;
    let prepared = Prepared::new(&raw, &opts.data_opts, seed)?;
    log::info!("compressing {} pairs to {m} with {method} ({:?})", raw.len(), prepared.kernels);
    let set = compress(prepared.data.pairs(), prepared.kernels, &config).context("compression failed")?;
    let (features, responses) = prepared.restore(&set.features, &set.responses);
    let out = output_path(opts.out, out_dir, "compressed.csv");
    write_points(&out, &raw.feature_names, &features, &raw.response_names, &responses)?;
    let trace = sibling(&out, "trace.csv");
    write_trace(&trace, &set)?;
    let last = set.objective_trace.last().copied().unwrap_or(f64::NAN);
    println!("wrote {} pairs to {} (final objective {last})", set.len(), out.display());
    Ok(())
}
