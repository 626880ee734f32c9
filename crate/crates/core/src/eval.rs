//! Evaluation: conditional-expectation RMSE over a battery of test
//! functions, classification from clip-normalised class probabilities, and
//! two-stage cross-validation of the regulariser.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::analytic::AnalyticScenario;
use crate::compressors::sample_indices;
use crate::data::{HeteroscedasticParams, LabelledDataset, Split};
use crate::embeddings::KcmeModel;
use crate::error::{invalid, Error, Result};
use crate::kernels::KernelPair;
use crate::objectives::label_set;
use crate::points::Points;
use crate::rng::stream;

/// Test functions `h` applied to the first response coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Identity,
    Square,
    Cube,
    Sin,
    Cos,
    /// `exp(−y²)`
    NegExpSquare,
    Abs,
    /// `1{y > 0}`
    Positive,
    /// `1{y = label}`
    Label(f64),
}

impl TestFunction {
    /// The continuous-response battery.
    pub const BATTERY: [TestFunction; 8] = [
        TestFunction::Identity,
        TestFunction::Square,
        TestFunction::Cube,
        TestFunction::Sin,
        TestFunction::Cos,
        TestFunction::NegExpSquare,
        TestFunction::Abs,
        TestFunction::Positive,
    ];

    pub fn name(&self) -> String {
        match self {
            TestFunction::Identity => "y".into(),
            TestFunction::Square => "y2".into(),
            TestFunction::Cube => "y3".into(),
            TestFunction::Sin => "sin".into(),
            TestFunction::Cos => "cos".into(),
            TestFunction::NegExpSquare => "exp_neg_y2".into(),
            TestFunction::Abs => "abs".into(),
            TestFunction::Positive => "positive".into(),
            TestFunction::Label(c) => format!("label_{c}"),
        }
    }

    pub fn apply(&self, y: &[f64]) -> f64 {
        let v = y[0];
        match *self {
            TestFunction::Identity => v,
            TestFunction::Square => v * v,
            TestFunction::Cube => v * v * v,
            TestFunction::Sin => v.sin(),
            TestFunction::Cos => v.cos(),
            TestFunction::NegExpSquare => (-v * v).exp(),
            TestFunction::Abs => v.abs(),
            TestFunction::Positive => f64::from(v > 0.0),
            TestFunction::Label(c) => f64::from(v == c),
        }
    }

    /// `h(y_j)` over the rows of `responses`, as a column.
    pub fn values(&self, responses: &Points) -> Mat<f64> {
        Mat::from_fn(responses.len(), 1, |j, _| self.apply(responses.row(j)))
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("label_") {
            let c = rest.parse().map_err(|_| Error::InvalidInput(format!("bad label in '{s}'")))?;
            return Ok(TestFunction::Label(c));
        }
        TestFunction::BATTERY
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown test function '{s}'")))
    }
}

/// A Gaussian conditional law `Y | X = x ~ N(m(x), v(x))` over scalar
/// responses.
pub trait GaussianConditional {
    fn mean_variance(&self, x: &[f64]) -> (f64, f64);
}

impl GaussianConditional for AnalyticScenario {
    fn mean_variance(&self, x: &[f64]) -> (f64, f64) {
        (self.conditional_mean(x[0]), self.sigma_eps2)
    }
}

impl GaussianConditional for HeteroscedasticParams {
    fn mean_variance(&self, x: &[f64]) -> (f64, f64) {
        (self.mean(x[0]), self.variance(x[0]))
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// `E[h(Y)]` for `Y ~ N(mean, var)`.
pub fn gaussian_expectation(h: TestFunction, mean: f64, var: f64) -> Result<f64> {
    if !(var >= 0.0) || !mean.is_finite() || !var.is_finite() {
        return invalid(format!("invalid Gaussian N({mean}, {var})"));
    }
    let (m, v) = (mean, var);
    let sd = v.sqrt();
    Ok(match h {
        TestFunction::Identity => m,
        TestFunction::Square => m * m + v,
        TestFunction::Cube => m * m * m + 3.0 * m * v,
        TestFunction::Sin => m.sin() * (-v / 2.0).exp(),
        TestFunction::Cos => m.cos() * (-v / 2.0).exp(),
        TestFunction::NegExpSquare => (-m * m / (1.0 + 2.0 * v)).exp() / (1.0 + 2.0 * v).sqrt(),
        TestFunction::Abs if sd == 0.0 => m.abs(),
        TestFunction::Abs => {
            sd * (2.0 / std::f64::consts::PI).sqrt() * (-m * m / (2.0 * v)).exp()
                + m * (1.0 - 2.0 * std_normal_cdf(-m / sd))
        }
        TestFunction::Positive if sd == 0.0 => f64::from(m > 0.0),
        TestFunction::Positive => std_normal_cdf(m / sd),
        TestFunction::Label(_) => {
            return Err(Error::Unsupported("label indicators have no Gaussian conditional expectation".into()))
        }
    })
}

/// `E[h(Y) | X = x]` under a Gaussian conditional law.
pub fn true_conditional_expectation(law: &impl GaussianConditional, h: TestFunction, x: &[f64]) -> Result<f64> {
    let (m, v) = law.mean_variance(x);
    gaussian_expectation(h, m, v)
}

pub fn rmse(reference: &[f64], predictions: &[f64]) -> Result<f64> {
    if reference.len() != predictions.len() {
        return invalid(format!("{} reference values but {} predictions", reference.len(), predictions.len()));
    }
    if reference.is_empty() {
        return invalid("RMSE of an empty set");
    }
    let sse: f64 = reference.iter().zip(predictions).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / reference.len() as f64).sqrt())
}

/// RMSE between `reference` and the model's estimate of `E[h(Y) | X = x]`
/// at each evaluation point.
pub fn rmse_conditional_expectation(
    reference: &[f64],
    model: &KcmeModel,
    eval_points: &Points,
    h: TestFunction,
) -> Result<f64> {
    if reference.len() != eval_points.len() {
        return invalid(format!("{} reference values for {} evaluation points", reference.len(), eval_points.len()));
    }
    let pred = model.predict_many(eval_points, &h.values(model.responses()))?;
    let pred: Vec<f64> = (0..pred.nrows()).map(|i| pred[(i, 0)]).collect();
    rmse(reference, &pred)
}

/// Clips negative scores to zero and renormalises; uniform when nothing
/// positive is left.
pub fn clip_normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return invalid("need at least one class");
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return invalid("class scores must be finite");
    }
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        Ok(clipped.iter().map(|v| v / total).collect())
    } else {
        Ok(vec![1.0 / raw.len() as f64; raw.len()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// Classes the model can predict (labels of its training set), ascending.
    pub classes: Vec<f64>,
    /// Clip-normalised probabilities, one row per evaluation point.
    pub probabilities: Vec<Vec<f64>>,
    pub predictions: Vec<f64>,
    pub accuracy: f64,
    pub macro_f1: f64,
}

impl Classification {
    /// RMSE per class between the estimated probabilities and `reference`
    /// (same layout as `probabilities`).
    pub fn probability_rmse(&self, reference: &[Vec<f64>]) -> Result<Vec<f64>> {
        if reference.len() != self.probabilities.len() || reference.iter().any(|r| r.len() != self.classes.len()) {
            return invalid("reference probabilities have the wrong shape");
        }
        (0..self.classes.len())
            .map(|c| {
                let a: Vec<f64> = reference.iter().map(|r| r[c]).collect();
                let b: Vec<f64> = self.probabilities.iter().map(|r| r[c]).collect();
                rmse(&a, &b)
            })
            .collect()
    }
}

/// Predicts the argmax of the clip-normalised class probabilities (lowest
/// label on ties) and scores against `labels`.
pub fn classify(model: &KcmeModel, eval_points: &Points, labels: &Points) -> Result<Classification> {
    if !model.kernels().response.is_indicator() {
        return invalid("classification needs the indicator response kernel");
    }
    if eval_points.len() != labels.len() || labels.dim() != 1 {
        return invalid("need one label per evaluation point");
    }
    let classes = label_set(model.responses())?;
    let h = Mat::from_fn(model.len(), classes.len(), |j, c| f64::from(model.responses().row(j)[0] == classes[c]));
    let raw = model.predict_many(eval_points, &h)?;
    let mut probabilities = Vec::with_capacity(eval_points.len());
    let mut predictions = Vec::with_capacity(eval_points.len());
    for i in 0..eval_points.len() {
        let row: Vec<f64> = (0..classes.len()).map(|c| raw[(i, c)]).collect();
        let p = clip_normalize(&row)?;
        let mut best = 0;
        for c in 1..p.len() {
            if p[c] > p[best] {
                best = c;
            }
        }
        predictions.push(classes[best]);
        probabilities.push(p);
    }
    let truth = labels.as_slice();
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    let accuracy = correct as f64 / truth.len() as f64;
    let macro_f1 = macro_f1(&predictions, truth);
    Ok(Classification { classes, probabilities, predictions, accuracy, macro_f1 })
}

/// Unweighted mean of per-class F1 over every class that is predicted or
/// present.
pub fn macro_f1(predictions: &[f64], truth: &[f64]) -> f64 {
    let mut classes: Vec<f64> = predictions.iter().chain(truth).copied().collect();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    let mut total = 0.0;
    for &c in &classes {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (&p, &t) in predictions.iter().zip(truth) {
            match (p == c, t == c) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                _ => {}
            }
        }
        total += 2.0 * tp / (2.0 * tp + fp + fn_);
    }
    total / classes.len() as f64
}

// ---------------------------------------------------------------------------
// Regulariser selection

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaSearch {
    /// Stage-one grid, ascending.
    pub coarse_grid: Vec<f64>,
    /// Points in the stage-two grid spanning the coarse cell around the
    /// stage-one winner.
    pub refine_points: usize,
    pub subset_size: usize,
    pub n_subsets: usize,
}

impl Default for LambdaSearch {
    fn default() -> Self {
        Self { coarse_grid: log_grid(1e-6, 1.0, 10), refine_points: 10, subset_size: 1000, n_subsets: 10 }
    }
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Validation RMSE of `E[Y | X]` estimates, averaged over response
/// dimensions, for a model fitted on `train` with regulariser `lambda`.
pub fn validation_loss(
    train: &LabelledDataset,
    val: &LabelledDataset,
    kernels: KernelPair,
    lambda: f64,
) -> Result<f64> {
    let model = KcmeModel::fit(&train.features, &train.responses, kernels, lambda)?;
    let p = train.responses.dim();
    let h = Mat::from_fn(train.len(), p, |j, k| train.responses.row(j)[k]);
    let pred = model.predict_many(&val.features, &h)?;
    let mut total = 0.0;
    for k in 0..p {
        let a = val.responses.column(k);
        let b: Vec<f64> = (0..val.len()).map(|i| pred[(i, k)]).collect();
        total += rmse(&a, &b)?;
    }
    Ok(total / p as f64)
}

fn grid_winner(grid: &[f64], mut loss: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut best = (f64::INFINITY, grid[0]);
    for &l in grid {
        let v = loss(l)?;
        if v < best.0 {
            best = (v, l);
        }
    }
    Ok(best.1)
}

/// Two-stage cross-validation of `λ` on the train/validation split of
/// `data`. Each random training subset picks a coarse winner and then a
/// fine winner; the result is the geometric mean of the fine winners.
pub fn select_lambda(data: &LabelledDataset, kernels: KernelPair, search: &LambdaSearch, seed: u64) -> Result<f64> {
    let grid = &search.coarse_grid;
    if grid.is_empty() {
        return invalid("λ grid is empty");
    }
    if grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return invalid("λ grid must be positive");
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    if search.n_subsets == 0 || search.subset_size == 0 {
        return invalid("need at least one non-empty training subset");
    }
    let mut grid = grid.clone();
    grid.sort_by(f64::total_cmp);
    let train_rows = data.indices(Split::Train);
    let val = data.part(Split::Val)?;
    if data.splits.is_none() || val.is_empty() {
        return invalid("λ selection needs a validation split");
    }
    let step = (grid[grid.len() - 1] / grid[0]).powf(1.0 / (grid.len() - 1) as f64);
    let mut rng = stream(seed, "lambda-subsets");
    let mut log_sum = 0.0;
    for _ in 0..search.n_subsets {
        let pick = sample_indices(&mut rng, train_rows.len(), search.subset_size);
        let rows: Vec<usize> = pick.iter().map(|&i| train_rows[i]).collect();
        let train = data.select(&rows)?;
        let mut loss = |l: f64| validation_loss(&train, &val, kernels, l);
        let coarse = grid_winner(&grid, &mut loss)?;
        let fine = log_grid(coarse / step.sqrt(), coarse * step.sqrt(), search.refine_points.max(1));
        log_sum += grid_winner(&fine, &mut loss)?.ln();
    }
    Ok((log_sum / search.n_subsets as f64).exp())
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub m: usize,
    pub seed: u64,
    pub lambda: f64,
    /// RMSE per test-function name.
    pub rmse: BTreeMap<String, f64>,
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    /// Estimated AMCMD² between the compressed set and the reference data.
    pub amcmd_squared: Option<f64>,
}

impl EvalReport {
    pub fn new(method: impl Into<String>, m: usize, seed: u64, lambda: f64) -> Self {
        Self {
            method: method.into(),
            m,
            seed,
            lambda,
            rmse: BTreeMap::new(),
            accuracy: None,
            macro_f1: None,
            amcmd_squared: None,
        }
    }

    /// `(metric, value)` pairs in a fixed order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self.rmse.iter().map(|(k, v)| (format!("rmse_{k}"), *v)).collect();
        let opt = [("accuracy", self.accuracy), ("macro_f1", self.macro_f1), ("amcmd_squared", self.amcmd_squared)];
        out.extend(opt.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub const CSV_HEADER: [&'static str; 5] = ["method", "m", "seed", "metric", "value"];

    /// Writes one `method,m,seed,metric,value` row per metric.
    pub fn write_csv_rows<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for (metric, value) in self.metrics() {
            w.write_record([
                self.method.clone(),
                self.m.to_string(),
                self.seed.to_string(),
                metric,
                value.to_string(),
            ])?;
        }
        Ok(())
    }
}
