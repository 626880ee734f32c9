use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use condcomp::compressors::sample_indices;
use condcomp::data::{split, LabelledDataset};
use condcomp::discrepancies::AmcmdReference;
use condcomp::embeddings::KcmeModel;
use condcomp::eval::{classify, rmse, select_lambda, EvalReport, LambdaSearch, TestFunction};
use condcomp::rng::stream;
use condcomp::Points;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::compress::DEFAULT_LAMBDA;
use crate::config::{ensure_parent, output_path, required, resolve, sibling, usage, CliError};
use crate::pipeline::{DataOpts, Prepared};

/// Evaluation points used when none is given.
pub const DEFAULT_EVAL_POINTS: usize = 1000;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON file with any of the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: EvalOpts,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(default)]
pub struct EvalOpts {
    /// The full dataset the compressed set was built from.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Compressed set with the same columns.
    #[arg(long)]
    pub compressed: Option<PathBuf>,
    /// Held-out rows for evaluation points and labels (default: the data).
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data_opts: DataOpts,
    /// Regulariser shared by both models.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Pick the regulariser by cross-validation on the data.
    #[arg(long)]
    pub auto_lambda: bool,
    /// Test functions (default: the full battery, or one label indicator per
    /// class for discrete responses). Names: y, y2, y3, sin, cos,
    /// exp_neg_y2, abs, positive, label_<c>.
    #[arg(long, value_delimiter = ',')]
    pub functions: Option<Vec<String>>,
    /// Evaluation points drawn from the test rows.
    #[arg(long)]
    pub eval_points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Method name recorded in the report.
    #[arg(long)]
    pub method: Option<String>,
    /// Report JSON (default: `report.json` in the output directory). CSV rows
    /// go to `<stem>.csv` beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn classes(data: &LabelledDataset) -> Vec<f64> {
    let mut c = data.responses.column(0);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

fn functions(opts: &EvalOpts, data: &LabelledDataset) -> Result<Vec<TestFunction>, CliError> {
    match &opts.functions {
        Some(names) => names.iter().map(|n| n.parse().map_err(|e: condcomp::Error| usage(e.to_string()))).collect(),
        None if data.discrete => Ok(classes(data).into_iter().map(TestFunction::Label).collect()),
        None => Ok(TestFunction::BATTERY.to_vec()),
    }
}

fn column(m: &Mat<f64>, k: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, k)]).collect()
}

/// `h` applied to each response in original units, one column per function.
fn h_matrix(responses: &Points, hs: &[TestFunction]) -> Mat<f64> {
    Mat::from_fn(responses.len(), hs.len(), |j, c| hs[c].apply(responses.row(j)))
}

fn choose_lambda(opts: &EvalOpts, prepared: &Prepared, seed: u64) -> Result<f64, CliError> {
    if let Some(l) = opts.lambda {
        if !(l > 0.0 && l.is_finite()) {
            return Err(usage("lambda must be positive"));
        }
        if opts.auto_lambda {
            return Err(usage("give either --lambda or --auto-lambda"));
        }
        return Ok(l);
    }
    if !opts.auto_lambda {
        return Ok(DEFAULT_LAMBDA);
    }
    let data = split(&prepared.data, [0.8, 0.1, 0.1], seed)?;
    let search = LambdaSearch { subset_size: data.len().min(1000), ..LambdaSearch::default() };
    let lambda = select_lambda(&data, prepared.kernels, &search, seed).context("λ selection failed")?;
    log::info!("selected λ = {lambda}");
    Ok(lambda)
}

pub fn evaluate(opts: &EvalOpts) -> Result<EvalReport, CliError> {
    let data_path = required(opts.data.clone(), "data")?;
    let compressed_path = required(opts.compressed.clone(), "compressed")?;
    let seed = opts.seed.unwrap_or(0);
    let raw = opts.data_opts.load(&data_path, opts.data_opts.discrete)?;
    let raw_c = opts.data_opts.load(&compressed_path, raw.discrete)?;
    let raw_t = match &opts.test {
        Some(p) => opts.data_opts.load(p, raw.discrete)?,
        None => raw.clone(),
    };
    if raw_c.is_empty() {
        return Err(usage(format!("{} has no rows", compressed_path.display())));
    }
    let prepared = Prepared::new(&raw, &opts.data_opts, seed)?;
    let comp = prepared.transform(&raw_c);
    let test = prepared.transform(&raw_t);
    let lambda = choose_lambda(opts, &prepared, seed)?;
    let hs = functions(opts, &raw)?;

    let count = opts.eval_points.unwrap_or(DEFAULT_EVAL_POINTS);
    let picked = sample_indices(&mut stream(seed, "eval-points"), test.len(), count);
    let x_eval = test.features.select(&picked);

    let full = KcmeModel::fit(&prepared.data.features, &prepared.data.responses, prepared.kernels, lambda)
        .context("fitting the full-data model")?;
    let model = KcmeModel::fit(&comp.features, &comp.responses, prepared.kernels, lambda)
        .context("fitting the compressed-set model")?;

    let method = opts.method.clone().unwrap_or_else(|| "unknown".into());
    let mut report = EvalReport::new(method, raw_c.len(), seed, lambda);
    if !hs.is_empty() {
        let reference = full.predict_many(&x_eval, &h_matrix(&raw.responses, &hs))?;
        let pred = model.predict_many(&x_eval, &h_matrix(&raw_c.responses, &hs))?;
        for (k, h) in hs.iter().enumerate() {
            report.rmse.insert(h.name(), rmse(&column(&reference, k), &column(&pred, k))?);
        }
    }
    if raw.discrete {
        let labels = raw_t.responses.select(&picked);
        let c = classify(&model, &x_eval, &labels)?;
        report.accuracy = Some(c.accuracy);
        report.macro_f1 = Some(c.macro_f1);
    }
    report.amcmd_squared = Some(AmcmdReference::new(&full, &x_eval)?.squared_against(&model)?);
    Ok(report)
}

pub fn run(args: EvalArgs, out_dir: &Path) -> Result<(), CliError> {
    let opts = resolve(&args.opts, args.config.as_deref())?;
    let report = evaluate(&opts)?;
    let out = output_path(opts.out.clone(), out_dir, "report.json");
    ensure_parent(&out)?;
    std::fs::write(&out, report.to_json()? + "\n").with_context(|| format!("cannot write {}", out.display()))?;
    let csv_path = sibling(&out, "csv");
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
    w.write_record(EvalReport::CSV_HEADER)?;
    report.write_csv_rows(&mut w)?;
    w.flush()?;
    println!("wrote {} metrics to {}", report.metrics().len(), out.display());
    Ok(())
}
