use std::collections::HashSet;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context;
use clap::Args;
use condcomp::analytic::{exact_amcmd_squared, AnalyticScenario};
use condcomp::compressors::{compress, random_subset, Method};
use condcomp::data::{standardize, HeteroscedasticParams, LabelledDataset};
use condcomp::discrepancies::AmcmdReference;
use condcomp::embeddings::KcmeModel;
use condcomp::eval::{classify, rmse, true_conditional_expectation, TestFunction};
use condcomp::{KernelPair, KernelSpec, Pairs, Points};
use faer::Mat;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::compress::{MethodOpts, DEFAULT_LAMBDA};
use crate::config::{ensure_parent, output_path, required, resolve, usage, CliError};
use crate::generate::{generate, params, Generator};
use crate::pipeline::median_lengthscale;

/// Method name of the random-subsampling arm.
pub const BASELINE: &str = "random";
/// Mixed into the seed to draw the held-out rows.
const TEST_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

pub const CSV_HEADER: [&str; 8] = ["scenario", "method", "m", "seed", "draw", "metric", "value", "error"];

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// JSON file with any of the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: BenchmarkOpts,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(default)]
pub struct BenchmarkOpts {
    #[arg(value_enum)]
    pub scenario: Option<Generator>,
    /// Training rows per seed.
    #[arg(long)]
    pub n: Option<usize>,
    /// Held-out rows per seed.
    #[arg(long)]
    pub test_n: Option<usize>,
    /// Methods to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Compressed-set sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Random subsets drawn per (size, seed) for the baseline arm.
    #[arg(long)]
    pub baseline_draws: Option<usize>,
    /// Scenario parameters as a JSON object.
    #[arg(long, value_parser = crate::generate::parse_json)]
    pub params: Option<Value>,
    #[command(flatten)]
    #[serde(flatten)]
    pub method_opts: MethodOpts,
    /// Worker threads (default 1).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Skip runs already present in the output file and append the rest.
    #[arg(long)]
    pub resume: bool,
    /// Results CSV (default: `benchmark.csv` in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct RunKey {
    method: String,
    m: usize,
    seed: u64,
    draw: usize,
}

#[derive(Debug, Clone, Copy)]
enum Arm {
    Method(Method),
    Random(usize),
}

#[derive(Debug, Clone, Copy)]
struct Run {
    arm: Arm,
    m: usize,
    seed: u64,
}

impl Run {
    fn key(&self) -> RunKey {
        let (method, draw) = match self.arm {
            Arm::Method(m) => (m.name().to_string(), 0),
            Arm::Random(d) => (BASELINE.to_string(), d),
        };
        RunKey { method, m: self.m, seed: self.seed, draw }
    }
}

/// Everything a run needs that depends only on the seed.
struct SeedContext {
    data: LabelledDataset,
    test: LabelledDataset,
    kernels: KernelPair,
    full: KcmeModel,
    /// True `E[Y | X]` at the test features, for continuous scenarios.
    true_mean: Option<Vec<f64>>,
}

enum Law {
    Analytic(AnalyticScenario),
    Heteroscedastic(HeteroscedasticParams),
    Imbalanced,
}

type Metrics = Vec<(String, f64)>;

struct Bench {
    scenario: Generator,
    law: Law,
    lambda: f64,
    opts: BenchmarkOpts,
}

impl Bench {
    fn context(&self, n: usize, test_n: usize, seed: u64) -> Result<SeedContext, CliError> {
        let raw = generate(self.scenario, n, seed, &self.opts.params)?;
        let raw_test = generate(self.scenario, test_n, seed ^ TEST_SEED_MIX, &self.opts.params)?;
        let test_x_raw = raw_test.features.clone();
        let truth = |law: &dyn Fn(&[f64]) -> condcomp::Result<f64>| -> Result<Vec<f64>, CliError> {
            Ok(test_x_raw.rows().map(law).collect::<Result<_, _>>()?)
        };
        let true_mean = match &self.law {
            Law::Analytic(s) => Some(truth(&|x| true_conditional_expectation(s, TestFunction::Identity, x))?),
            Law::Heteroscedastic(p) => Some(truth(&|x| true_conditional_expectation(p, TestFunction::Identity, x))?),
            Law::Imbalanced => None,
        };
        let (data, test, kernels) = match &self.law {
            // The closed forms are stated in the scenario's own coordinates.
            Law::Analytic(s) => (raw, raw_test, s.kernels()?),
            _ => {
                let data = standardize(&raw, None)?;
                let s = data.standardisation.clone().expect("standardised data carries its transform");
                let mut test = raw_test;
                test.features = s.features.apply(&test.features);
                test.responses = s.responses.apply(&test.responses);
                let feature = KernelSpec::gaussian(median_lengthscale(&data.features, seed, "median-x")?)?;
                let response = if data.discrete {
                    KernelSpec::indicator()
                } else {
                    KernelSpec::gaussian(median_lengthscale(&data.responses, seed, "median-y")?)?
                };
                (data, test, KernelPair::new(feature, response))
            }
        };
        let full = KcmeModel::fit(&data.features, &data.responses, kernels, self.lambda)?;
        Ok(SeedContext { data, test, kernels, full, true_mean })
    }

    fn compressed(&self, run: &Run, ctx: &SeedContext) -> Result<(Points, Points), CliError> {
        match run.arm {
            Arm::Random(draw) => {
                let seed = run.seed.wrapping_mul(1_000_003).wrapping_add(draw as u64);
                Ok(random_subset(ctx.data.pairs(), run.m, seed)?)
            }
            Arm::Method(method) => {
                let config = self.opts.method_opts.config(method, run.m, run.seed)?;
                let set = compress(ctx.data.pairs(), ctx.kernels, &config)?;
                Ok((set.features, set.responses))
            }
        }
    }

    fn metrics(&self, run: &Run, ctx: &SeedContext, reference: &AmcmdReference<'_>) -> Result<Metrics, CliError> {
        let (features, responses) = self.compressed(run, ctx)?;
        let model = KcmeModel::fit(&features, &responses, ctx.kernels, self.lambda)?;
        let mut out = Vec::new();
        match &self.law {
            Law::Analytic(s) => {
                out.push((
                    "amcmd_squared".into(),
                    exact_amcmd_squared(s, Pairs::new(&features, &responses)?, self.lambda)?,
                ));
            }
            _ => out.push(("amcmd_squared".into(), reference.squared_against(&model)?)),
        }
        if let Some(truth) = &ctx.true_mean {
            // Predictions in original units: KCME weights are unit-free, so
            // the identity is applied to the unstandardised responses.
            let y = match &ctx.data.standardisation {
                Some(s) => s.responses.invert(&responses),
                None => responses.clone(),
            };
            let h = Mat::from_fn(y.len(), 1, |j, _| y.row(j)[0]);
            let pred = model.predict_many(&ctx.test.features, &h)?;
            let pred: Vec<f64> = (0..pred.nrows()).map(|i| pred[(i, 0)]).collect();
            out.push(("rmse_y".into(), rmse(truth, &pred)?));
        }
        if ctx.data.discrete {
            let c = classify(&model, &ctx.test.features, &ctx.test.responses)?;
            out.push(("accuracy".into(), c.accuracy));
            out.push(("macro_f1".into(), c.macro_f1));
        }
        Ok(out)
    }
}

fn existing_keys(path: &Path, scenario: &str) -> Result<HashSet<RunKey>, CliError> {
    let mut keys = HashSet::new();
    if !path.exists() {
        return Ok(keys);
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    if rdr.headers()?.iter().ne(CSV_HEADER) {
        return Err(usage(format!("{} is not a benchmark results file", path.display())));
    }
    for rec in rdr.records() {
        let rec = rec?;
        if &rec[0] != scenario {
            continue;
        }
        let parse = |i: usize| rec[i].parse::<u64>().with_context(|| format!("bad row in {}", path.display()));
        keys.insert(RunKey {
            method: rec[1].to_string(),
            m: parse(2)? as usize,
            seed: parse(3)?,
            draw: parse(4)? as usize,
        });
    }
    Ok(keys)
}

fn rows(scenario: &str, key: &RunKey, result: &Result<Metrics, CliError>) -> Vec<[String; 8]> {
    let base = |metric: String, value: String, error: String| {
        [
            scenario.to_string(),
            key.method.clone(),
            key.m.to_string(),
            key.seed.to_string(),
            key.draw.to_string(),
            metric,
            value,
            error,
        ]
    };
    match result {
        Ok(metrics) => metrics.iter().map(|(k, v)| base(k.clone(), v.to_string(), String::new())).collect(),
        Err(e) => vec![base(String::new(), String::new(), e.to_string())],
    }
}

pub fn run(args: BenchmarkArgs, out_dir: &Path) -> Result<(), CliError> {
    let opts = resolve(&args.opts, args.config.as_deref())?;
    let scenario = required(opts.scenario, "scenario")?;
    let n = opts.n.unwrap_or(1000);
    let test_n = opts.test_n.unwrap_or(200);
    let sizes = opts.sizes.clone().unwrap_or_else(|| vec![10, 25, 50]);
    let seeds = opts.seeds.clone().unwrap_or_else(|| vec![0]);
    let methods = opts.methods.clone().unwrap_or_else(|| match scenario {
        Generator::Imbalanced => vec![Method::AckhGradFree, Method::JkipDiscrete, Method::AckipDiscrete],
        _ => vec![Method::Jkh, Method::Jkip, Method::Ackh, Method::Ackip],
    });
    let draws = opts.baseline_draws.unwrap_or(10);
    let jobs = opts.jobs.unwrap_or(1).max(1);
    if sizes.is_empty() || seeds.is_empty() {
        return Err(usage("need at least one size and one seed"));
    }
    if n == 0 || test_n == 0 {
        return Err(usage("n and test_n must be positive"));
    }
    // Catch bad method options before any work is done.
    for &method in &methods {
        opts.method_opts.config(method, sizes[0], 0)?;
    }
    let law = match scenario {
        Generator::Analytic => Law::Analytic(params(&opts.params)?),
        Generator::Heteroscedastic => Law::Heteroscedastic(params(&opts.params)?),
        Generator::Imbalanced => Law::Imbalanced,
    };
    let lambda = opts.method_opts.lambda.unwrap_or(DEFAULT_LAMBDA);
    let out = output_path(opts.out.clone(), out_dir, "benchmark.csv");
    let done = if opts.resume { existing_keys(&out, scenario.name())? } else { HashSet::new() };
    let bench = Bench { scenario, law, lambda, opts };

    let mut runs = Vec::new();
    for &seed in &seeds {
        for &m in &sizes {
            for &method in &methods {
                runs.push(Run { arm: Arm::Method(method), m, seed });
            }
            for d in 0..draws {
                runs.push(Run { arm: Arm::Random(d), m, seed });
            }
        }
    }
    runs.retain(|r| !done.contains(&r.key()));

    let mut needed: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    needed.sort_unstable();
    needed.dedup();
    let contexts: Vec<(u64, Result<SeedContext, CliError>)> =
        needed.iter().map(|&s| (s, bench.context(n, test_n, s))).collect();
    let references: Vec<Option<AmcmdReference<'_>>> = contexts
        .iter()
        .map(|(_, c)| c.as_ref().ok().and_then(|c| AmcmdReference::new(&c.full, &c.test.features).ok()))
        .collect();

    let results: Vec<Mutex<Option<Result<Metrics, CliError>>>> = runs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(run) = runs.get(i) else { break };
        let slot = contexts.iter().position(|(s, _)| *s == run.seed).expect("context for every seed");
        let result = match (&contexts[slot].1, &references[slot]) {
            (Ok(ctx), Some(reference)) => bench.metrics(run, ctx, reference),
            (Ok(_), None) => Err(CliError::Runtime(anyhow::anyhow!("cannot build the reference model"))),
            (Err(e), _) => Err(CliError::Runtime(anyhow::anyhow!("scenario generation failed: {e}"))),
        };
        if let Err(e) = &result {
            log::warn!("{:?} failed: {e}", run.key());
        }
        *results[i].lock().expect("result slot") = Some(result);
    };
    std::thread::scope(|scope| {
        for _ in 1..jobs {
            scope.spawn(work);
        }
        work();
    });

    ensure_parent(&out)?;
    let fresh = !(bench.opts.resume && out.metadata().map(|m| m.len() > 0).unwrap_or(false));
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&out)
        .with_context(|| format!("cannot write {}", out.display()))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER)?;
    }
    let mut written = 0;
    let mut failed = 0;
    for (run, slot) in runs.iter().zip(results) {
        let result = slot.into_inner().expect("result slot").expect("every run executed");
        failed += usize::from(result.is_err());
        for row in rows(scenario.name(), &run.key(), &result) {
            w.write_record(&row)?;
            written += 1;
        }
    }
    w.flush()?;
    println!("{} runs ({failed} failed), {written} rows written to {}", runs.len(), out.display());
    Ok(())
}
