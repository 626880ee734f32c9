use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use condcomp::analytic::{sample_scenario, AnalyticScenario};
use condcomp::data::{
    gen_heteroscedastic, gen_imbalanced, save_csv, HeteroscedasticParams, ImbalancedParams, LabelledDataset,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ensure_parent, output_path, required, resolve, usage, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Heteroscedastic,
    Imbalanced,
    Analytic,
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Heteroscedastic => "heteroscedastic",
            Generator::Imbalanced => "imbalanced",
            Generator::Analytic => "analytic",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON file with any of the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: GenerateOpts,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateOpts {
    #[arg(value_enum)]
    pub generator: Option<Generator>,
    /// Number of rows.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generator parameters as a JSON object; omitted keys keep their defaults.
    #[arg(long, value_parser = parse_json)]
    pub params: Option<Value>,
    /// Output CSV (default: `<generator>.csv` in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_json(s: &str) -> Result<Value, String> {
    serde_json::from_str(s).map_err(|e| e.to_string())
}

pub fn params<T: serde::de::DeserializeOwned + Default>(v: &Option<Value>) -> Result<T, CliError> {
    match v {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| usage(format!("generator params: {e}"))),
    }
}

pub fn generate(generator: Generator, n: usize, seed: u64, raw: &Option<Value>) -> Result<LabelledDataset, CliError> {
    let invalid = |e: condcomp::Error| match e {
        condcomp::Error::InvalidInput(m) => usage(m),
        other => CliError::Runtime(other.into()),
    };
    match generator {
        Generator::Heteroscedastic => {
            gen_heteroscedastic(n, &params::<HeteroscedasticParams>(raw)?, seed).map_err(invalid)
        }
        Generator::Imbalanced => gen_imbalanced(n, &params::<ImbalancedParams>(raw)?, seed).map_err(invalid),
        Generator::Analytic => sample_scenario(&params::<AnalyticScenario>(raw)?, n, seed).map_err(invalid),
    }
}

pub fn run(args: GenerateArgs, out_dir: &Path) -> Result<(), CliError> {
    let opts = resolve(&args.opts, args.config.as_deref())?;
    let generator = required(opts.generator, "generator")?;
    let n = required(opts.n, "n")?;
    let seed = opts.seed.unwrap_or(0);
    let data = generate(generator, n, seed, &opts.params)?;
    let out = output_path(opts.out, out_dir, &format!("{}.csv", generator.name()));
    ensure_parent(&out)?;
    save_csv(&data, &out).map_err(anyhow::Error::from)?;
    println!("wrote {} rows to {}", data.len(), out.display());
    Ok(())
}
