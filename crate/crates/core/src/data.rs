//! Labelled datasets: synthetic generators, CSV ingestion, standardisation
//! and train/validation/test splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::points::{Pairs, Points};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Per-dimension affine transform `z = (v − mean) / sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], sd: vec![1.0; dim] }
    }

    /// Fits mean and population standard deviation of each column.
    pub fn fit(points: &Points, what: &str) -> Result<Self> {
        if points.is_empty() {
            return invalid("cannot standardise an empty set");
        }
        let n = points.len() as f64;
        let mut mean = vec![0.0; points.dim()];
        let mut sd = vec![0.0; points.dim()];
        for j in 0..points.dim() {
            let col = points.column(j);
            let mu = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            if !(var > 0.0) || !var.is_finite() {
                return invalid(format!("{what} dimension {j} has zero standard deviation"));
            }
            mean[j] = mu;
            sd[j] = var.sqrt();
        }
        Ok(Self { mean, sd })
    }

    pub fn apply(&self, points: &Points) -> Points {
        self.map(points, |v, mu, s| (v - mu) / s)
    }

    pub fn invert(&self, points: &Points) -> Points {
        self.map(points, |v, mu, s| v * s + mu)
    }

    fn map(&self, points: &Points, f: impl Fn(f64, f64, f64) -> f64) -> Points {
        let mut out = points.clone();
        for i in 0..out.len() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = f(*v, self.mean[j], self.sd[j]);
            }
        }
        out
    }
}

/// Transform applied by [`standardize`]; discrete responses keep the
/// identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardisation {
    pub features: Affine,
    pub responses: Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledDataset {
    pub features: Points,
    pub responses: Points,
    pub feature_names: Vec<String>,
    pub response_names: Vec<String>,
    /// Responses are integer class labels.
    pub discrete: bool,
    pub standardisation: Option<Standardisation>,
    /// One tag per row once [`split`] has run.
    pub splits: Option<Vec<Split>>,
}

fn default_names(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (0..dim).map(|j| format!("{prefix}{j}")).collect()
    }
}

impl LabelledDataset {
    pub fn new(features: Points, responses: Points, discrete: bool) -> Result<Self> {
        let (d, p) = (features.dim(), responses.dim());
        Self::with_names(features, responses, default_names("x", d), default_names("y", p), discrete)
    }

    pub fn with_names(
        features: Points,
        responses: Points,
        feature_names: Vec<String>,
        response_names: Vec<String>,
        discrete: bool,
    ) -> Result<Self> {
        if features.is_empty() {
            return invalid("a dataset needs at least one row");
        }
        if features.len() != responses.len() {
            return invalid(format!("{} feature rows but {} response rows", features.len(), responses.len()));
        }
        if feature_names.len() != features.dim() || response_names.len() != responses.dim() {
            return invalid("column names do not match the dimensions");
        }
        if discrete {
            if responses.dim() != 1 {
                return invalid("discrete responses must be a single label column");
            }
            if let Some(bad) = responses.as_slice().iter().find(|v| v.fract() != 0.0 || !v.is_finite()) {
                return invalid(format!("label {bad} is not an integer"));
            }
        }
        Ok(Self { features, responses, feature_names, response_names, discrete, standardisation: None, splits: None })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn pairs(&self) -> Pairs<'_> {
        Pairs { features: &self.features, responses: &self.responses }
    }

    /// Row indices tagged `which`; every row when no split has been made.
    pub fn indices(&self, which: Split) -> Vec<usize> {
        match &self.splits {
            Some(tags) => tags.iter().enumerate().filter(|(_, t)| **t == which).map(|(i, _)| i).collect(),
            None => (0..self.len()).collect(),
        }
    }

    /// Rows tagged `which` as an untagged dataset.
    pub fn part(&self, which: Split) -> Result<LabelledDataset> {
        self.select(&self.indices(which))
    }

    pub fn select(&self, indices: &[usize]) -> Result<LabelledDataset> {
        if indices.is_empty() {
            return invalid("selection is empty");
        }
        Ok(LabelledDataset {
            features: self.features.select(indices),
            responses: self.responses.select(indices),
            feature_names: self.feature_names.clone(),
            response_names: self.response_names.clone(),
            discrete: self.discrete,
            standardisation: self.standardisation.clone(),
            splits: None,
        })
    }

    /// Features and responses mapped back to the original units.
    pub fn unstandardised(&self) -> (Points, Points) {
        match &self.standardisation {
            Some(s) => (s.features.invert(&self.features), s.responses.invert(&self.responses)),
            None => (self.features.clone(), self.responses.clone()),
        }
    }
}

/// Fits the transform on the rows tagged `fit_on` (all rows if `None`, or
/// if the dataset is unsplit) and applies it to every row.
pub fn standardize(dataset: &LabelledDataset, fit_on: Option<Split>) -> Result<LabelledDataset> {
    if dataset.standardisation.is_some() {
        return invalid("dataset is already standardised");
    }
    let rows = match fit_on {
        Some(s) => {
            if dataset.splits.is_none() {
                return invalid("dataset has no split to fit the standardisation on");
            }
            dataset.indices(s)
        }
        None => (0..dataset.len()).collect(),
    };
    if rows.is_empty() {
        return invalid("the split to fit the standardisation on is empty");
    }
    let features = Affine::fit(&dataset.features.select(&rows), "feature")?;
    let responses = if dataset.discrete {
        Affine::identity(dataset.responses.dim())
    } else {
        Affine::fit(&dataset.responses.select(&rows), "response")?
    };
    let mut out = dataset.clone();
    out.features = features.apply(&dataset.features);
    out.responses = responses.apply(&dataset.responses);
    out.standardisation = Some(Standardisation { features, responses });
    Ok(out)
}

/// Random partition into train/validation/test with sizes
/// `round(n · train)`, `round(n · val)` and the remainder.
pub fn split(dataset: &LabelledDataset, fractions: [f64; 3], seed: u64) -> Result<LabelledDataset> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return invalid(format!("split fractions {fractions:?} must be non-negative and sum to 1"));
    }
    let n = dataset.len();
    let n_train = ((n as f64) * fractions[0]).round() as usize;
    let n_val = (((n as f64) * fractions[1]).round() as usize).min(n - n_train.min(n));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, "split"));
    let mut tags = vec![Split::Test; n];
    for (k, &i) in order.iter().enumerate() {
        if k < n_train {
            tags[i] = Split::Train;
        } else if k < n_train + n_val {
            tags[i] = Split::Val;
        }
    }
    let mut out = dataset.clone();
    out.splits = Some(tags);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Generators

/// Mean and variance functions of the heteroscedastic benchmark:
/// `f(x) = Σ aᵢ exp(−(x − cᵢ)² / bᵢ)`, `σ²(x) = σ₁² + |σ₂² sin x|`, with
/// `X ~ N(0, 2²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeteroscedasticParams {
    pub a: [f64; 4],
    pub b: [f64; 4],
    pub c: [f64; 4],
    pub sigma1_2: f64,
    pub sigma2_2: f64,
}

impl Default for HeteroscedasticParams {
    fn default() -> Self {
        Self {
            a: [3.0, -3.0, 6.0, -6.0],
            b: [1.0, 0.1, 2.0, 0.5],
            c: [-5.0, -2.0, 2.0, 5.0],
            sigma1_2: 0.1,
            sigma2_2: 0.75,
        }
    }
}

impl HeteroscedasticParams {
    pub const FEATURE_SD: f64 = 2.0;

    pub fn validate(&self) -> Result<()> {
        let finite = self.a.iter().chain(&self.b).chain(&self.c).all(|v| v.is_finite());
        if !finite || self.b.iter().any(|b| !(*b > 0.0)) {
            return invalid("bump widths must be positive and all parameters finite");
        }
        if !(self.sigma1_2 >= 0.0 && self.sigma2_2 >= 0.0) || !(self.sigma1_2 + self.sigma2_2).is_finite() {
            return invalid("noise variances must be non-negative");
        }
        Ok(())
    }

    pub fn mean(&self, x: f64) -> f64 {
        (0..4).map(|i| self.a[i] * (-(x - self.c[i]).powi(2) / self.b[i]).exp()).sum()
    }

    pub fn variance(&self, x: f64) -> f64 {
        self.sigma1_2 + (self.sigma2_2 * x.sin()).abs()
    }
}

pub fn gen_heteroscedastic(n: usize, params: &HeteroscedasticParams, seed: u64) -> Result<LabelledDataset> {
    params.validate()?;
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let mut rx = stream(seed, "heteroscedastic-x");
    let mut ry = stream(seed, "heteroscedastic-y");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = HeteroscedasticParams::FEATURE_SD * rx.sample::<f64, _>(StandardNormal);
        let e: f64 = ry.sample(StandardNormal);
        xs.push(x);
        ys.push(params.mean(x) + params.variance(x).sqrt() * e);
    }
    LabelledDataset::new(Points::from_scalars(&xs), Points::from_scalars(&ys), false)
}

/// Four-class multinomial logistic labels over a 2-D Gaussian mixture.
///
/// Class `c` has score `β_c · x + ε_c` with `ε_c ~ N(0, noise_var)`, and the
/// label is drawn from the softmax of the four scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImbalancedParams {
    pub beta: [[f64; 2]; 4],
    pub noise_var: f64,
    pub components: usize,
    /// Component means are uniform on `[−half_width, half_width]²`.
    pub half_width: f64,
    pub component_sd: f64,
}

impl Default for ImbalancedParams {
    fn default() -> Self {
        Self {
            beta: [[10.0, 40.0], [8.0, 45.0], [1.0, 40.0], [45.0, 10.0]],
            noise_var: 100.0,
            components: 100,
            half_width: 10.0,
            component_sd: 0.7,
        }
    }
}

impl ImbalancedParams {
    pub fn validate(&self) -> Result<()> {
        if self.beta.iter().flatten().any(|b| !b.is_finite()) {
            return invalid("β must be finite");
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return invalid("noise variance must be non-negative");
        }
        if self.components == 0 || !(self.half_width > 0.0) || !(self.component_sd > 0.0) {
            return invalid("mixture needs at least one component with positive width and spread");
        }
        Ok(())
    }
}

pub fn gen_imbalanced(n: usize, params: &ImbalancedParams, seed: u64) -> Result<LabelledDataset> {
    params.validate()?;
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let mut rm = stream(seed, "imbalanced-mixture");
    let box_dist = Uniform::new_inclusive(-params.half_width, params.half_width)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let means: Vec<[f64; 2]> =
        (0..params.components).map(|_| [box_dist.sample(&mut rm), box_dist.sample(&mut rm)]).collect();
    let noise = Normal::new(0.0, params.noise_var.sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rx = stream(seed, "imbalanced-x");
    let mut ry = stream(seed, "imbalanced-y");
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mu = means[rx.random_range(0..params.components)];
        let x = [
            mu[0] + params.component_sd * rx.sample::<f64, _>(StandardNormal),
            mu[1] + params.component_sd * rx.sample::<f64, _>(StandardNormal),
        ];
        let scores: Vec<f64> = params.beta.iter().map(|b| b[0] * x[0] + b[1] * x[1] + noise.sample(&mut ry)).collect();
        labels.push(sample_softmax(&scores, ry.random::<f64>()) as f64);
        features.extend_from_slice(&x);
    }
    LabelledDataset::new(Points::new(features, n, 2)?, Points::from_scalars(&labels), true)
}

/// Inverse-CDF draw from `softmax(scores)` given `u ∈ [0, 1)`.
fn sample_softmax(scores: &[f64], u: f64) -> usize {
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (c, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc {
            return c;
        }
    }
    weights.len() - 1
}

// ---------------------------------------------------------------------------
// CSV

/// Reads the named columns of a headed CSV file.
pub fn load_csv(
    path: impl AsRef<Path>,
    feature_cols: &[&str],
    response_cols: &[&str],
    discrete: bool,
) -> Result<LabelledDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, feature_cols, response_cols, discrete)
}

pub fn read_csv(
    reader: impl std::io::Read,
    feature_cols: &[&str],
    response_cols: &[&str],
    discrete: bool,
) -> Result<LabelledDataset> {
    if feature_cols.is_empty() || response_cols.is_empty() {
        return invalid("need at least one feature and one response column");
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let locate = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("column '{name}' not found in header")))
    };
    let fi: Vec<usize> = feature_cols.iter().map(|c| locate(c)).collect::<Result<_>>()?;
    let ri: Vec<usize> = response_cols.iter().map(|c| locate(c)).collect::<Result<_>>()?;
    let mut features = Vec::new();
    let mut responses = Vec::new();
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |j: usize, name: &str| -> Result<f64> {
            let raw = record.get(j).ok_or_else(|| Error::Parse {
                row,
                column: name.to_string(),
                message: "missing cell".into(),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("'{raw}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, column: name.to_string(), message: format!("'{raw}' is not finite") });
            }
            if discrete && ri.contains(&j) && v.fract() != 0.0 {
                return Err(Error::InvalidInput(format!("row {row}, column {name}: label '{raw}' is not an integer")));
            }
            Ok(v)
        };
        for (&j, name) in fi.iter().zip(feature_cols) {
            features.push(cell(j, name)?);
        }
        for (&j, name) in ri.iter().zip(response_cols) {
            responses.push(cell(j, name)?);
        }
        n += 1;
    }
    if n == 0 {
        return invalid("file has no data rows");
    }
    LabelledDataset::with_names(
        Points::new(features, n, feature_cols.len())?,
        Points::new(responses, n, response_cols.len())?,
        feature_cols.iter().map(|s| s.to_string()).collect(),
        response_cols.iter().map(|s| s.to_string()).collect(),
        discrete,
    )
}

/// Writes features then responses under their column names. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn save_csv(dataset: &LabelledDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(dataset, file)
}

pub fn write_csv(dataset: &LabelledDataset, writer: impl std::io::Write) -> Result<()> {
    write_points_csv(writer, &dataset.feature_names, &dataset.features, &dataset.response_names, &dataset.responses)
}

pub fn write_points_csv(
    writer: impl std::io::Write,
    feature_names: &[String],
    features: &Points,
    response_names: &[String],
    responses: &Points,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(feature_names.iter().chain(response_names))?;
    for i in 0..features.len() {
        w.write_record(features.row(i).iter().chain(responses.row(i)).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
