//! Compression algorithms: gradient-based and gradient-free herding,
//! inducing points, and inducing points with exhaustive label search.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::KernelPair;
use crate::objectives::{
    ackh_loss, ackh_loss_and_grad, ackip_loss, ackip_loss_and_grad, jkh_loss, jkh_loss_and_grad, jkip_loss,
    jkip_loss_and_grad, GradientPair, LabelScorer, ObjectiveContext,
};
use crate::optim::{descend, DescentSettings, Optimiser};
use crate::points::{Pairs, Points};
use crate::rng::{stream, StreamRng};

/// Serialised under its display name; parsing ignores case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub enum Method {
    #[serde(rename = "JKH")]
    Jkh,
    #[serde(rename = "JKIP")]
    Jkip,
    #[serde(rename = "ACKH")]
    Ackh,
    #[serde(rename = "ACKIP")]
    Ackip,
    #[serde(rename = "JKH_GradFree")]
    JkhGradFree,
    #[serde(rename = "ACKH_GradFree")]
    AckhGradFree,
    #[serde(rename = "JKIP_Discrete")]
    JkipDiscrete,
    #[serde(rename = "ACKIP_Discrete")]
    AckipDiscrete,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Jkh,
        Method::Jkip,
        Method::Ackh,
        Method::Ackip,
        Method::JkhGradFree,
        Method::AckhGradFree,
        Method::JkipDiscrete,
        Method::AckipDiscrete,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Jkh => "JKH",
            Method::Jkip => "JKIP",
            Method::Ackh => "ACKH",
            Method::Ackip => "ACKIP",
            Method::JkhGradFree => "JKH_GradFree",
            Method::AckhGradFree => "ACKH_GradFree",
            Method::JkipDiscrete => "JKIP_Discrete",
            Method::AckipDiscrete => "ACKIP_Discrete",
        }
    }

    /// Whether the method targets the conditional distribution (and so
    /// needs a regulariser).
    pub fn is_conditional(&self) -> bool {
        matches!(self, Method::Ackh | Method::Ackip | Method::AckhGradFree | Method::AckipDiscrete)
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Method::JkipDiscrete | Method::AckipDiscrete)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub method: Method,
    pub target_size: usize,
    pub candidate_count: usize,
    pub max_iters: usize,
    pub learning_rate: f64,
    pub lambda: Option<f64>,
    pub optimiser: Optimiser,
    pub tol: f64,
    pub patience: usize,
    pub seed: u64,
}

impl CompressionConfig {
    pub fn new(method: Method, target_size: usize) -> Self {
        Self {
            method,
            target_size,
            candidate_count: 10,
            max_iters: 100,
            learning_rate: 0.01,
            lambda: None,
            optimiser: Optimiser::default(),
            tol: 1e-6,
            patience: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return invalid("target size must be at least 1");
        }
        if self.candidate_count == 0 {
            return invalid("candidate count must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.tol >= 0.0) {
            return invalid("tolerance must be non-negative");
        }
        if self.patience == 0 {
            return invalid("patience must be at least 1");
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return invalid(format!("regulariser must be positive, got {l}"));
            }
        }
        if self.method.is_conditional() && self.lambda.is_none() {
            return invalid(format!("{} needs a regulariser", self.method));
        }
        self.optimiser.validate()
    }

    fn descent(&self) -> DescentSettings {
        DescentSettings {
            optimiser: self.optimiser,
            learning_rate: self.learning_rate,
            max_iters: self.max_iters,
            tol: self.tol,
            patience: self.patience,
        }
    }

    fn context<'a>(&self, data: Pairs<'a>, kernels: KernelPair) -> Result<ObjectiveContext<'a>> {
        match self.lambda {
            Some(l) if self.method.is_conditional() => ObjectiveContext::conditional(data, kernels, l),
            _ => ObjectiveContext::joint(data, kernels),
        }
    }
}

/// Output of a compressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedSet {
    pub features: Points,
    pub responses: Points,
    pub method: Method,
    /// Herding: the final objective of every appended pair. Inducing points:
    /// the objective before the first and after every iteration.
    pub objective_trace: Vec<f64>,
    pub seed: u64,
}

impl CompressedSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn pairs(&self) -> Pairs<'_> {
        Pairs { features: &self.features, responses: &self.responses }
    }
}

/// Runs the configured method.
pub fn compress(data: Pairs<'_>, kernels: KernelPair, config: &CompressionConfig) -> Result<CompressedSet> {
    match config.method {
        Method::Jkh => run_jkh(data, kernels, config),
        Method::Ackh => run_ackh(data, kernels, config),
        Method::Jkip => run_jkip(data, kernels, config),
        Method::Ackip => run_ackip(data, kernels, config),
        Method::JkhGradFree => run_herding_gradfree(data, kernels, config, false),
        Method::AckhGradFree => run_herding_gradfree(data, kernels, config, true),
        Method::JkipDiscrete => run_kip_discrete(data, kernels, config, false),
        Method::AckipDiscrete => run_kip_discrete(data, kernels, config, true),
    }
}

fn expect_method(config: &CompressionConfig, allowed: &[Method]) -> Result<()> {
    config.validate()?;
    if !allowed.contains(&config.method) {
        return invalid(format!("configuration is for {}, not {:?}", config.method, allowed));
    }
    Ok(())
}

/// `count` distinct indices out of `0..n` in ascending order; all of them
/// when `count ≥ n`.
pub fn sample_indices(rng: &mut StreamRng, n: usize, count: usize) -> Vec<usize> {
    if count >= n {
        return (0..n).collect();
    }
    let mut idx = index::sample(rng, n, count).into_vec();
    idx.sort_unstable();
    idx
}

/// Uniform random subset of `m` pairs, in ascending index order.
pub fn random_subset(data: Pairs<'_>, m: usize, seed: u64) -> Result<(Points, Points)> {
    if m == 0 || m > data.len() {
        return invalid(format!("cannot draw {m} of {} pairs", data.len()));
    }
    let mut rng = stream(seed, "random-subset");
    let idx = sample_indices(&mut rng, data.len(), m);
    Ok((data.features.select(&idx), data.responses.select(&idx)))
}

/// Index of the smallest value; the first one wins ties.
fn argmin(values: impl IntoIterator<Item = Result<f64>>) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.ok_or_else(|| Error::InvalidInput("no candidates".into()))
}

fn check_data(data: &Pairs<'_>) -> Result<()> {
    if data.is_empty() {
        return invalid("cannot compress an empty dataset");
    }
    if !data.features.is_finite() || !data.responses.is_finite() {
        return invalid("dataset contains non-finite values");
    }
    Ok(())
}

fn split_params(params: &[f64], d: usize) -> (&[f64], &[f64]) {
    params.split_at(d)
}

fn flatten(grad: &GradientPair, p: usize) -> Vec<f64> {
    let mut out = grad.d_features.as_slice().to_vec();
    match &grad.d_responses {
        Some(g) => out.extend_from_slice(g.as_slice()),
        None => out.extend(std::iter::repeat_n(0.0, p)),
    }
    out
}

// ---------------------------------------------------------------------------
// Herding

type HerdingLoss = fn(&ObjectiveContext<'_>, Pairs<'_>, &[f64], &[f64]) -> Result<f64>;
type HerdingLossGrad = fn(&ObjectiveContext<'_>, Pairs<'_>, &[f64], &[f64]) -> Result<(f64, GradientPair)>;

fn herd(
    data: Pairs<'_>,
    kernels: KernelPair,
    config: &CompressionConfig,
    loss: HerdingLoss,
    refine: Option<HerdingLossGrad>,
) -> Result<CompressedSet> {
    check_data(&data)?;
    let ctx = config.context(data, kernels)?;
    let (d, p) = (data.features.dim(), data.responses.dim());
    let mut rng = stream(config.seed, "herding-candidates");
    let mut features = Points::empty(d);
    let mut responses = Points::empty(p);
    let mut trace = Vec::with_capacity(config.target_size);
    for _ in 0..config.target_size {
        let current = Pairs { features: &features, responses: &responses };
        let candidates = sample_indices(&mut rng, data.len(), config.candidate_count);
        let (best, best_loss) =
            argmin(candidates.iter().map(|&i| loss(&ctx, current, data.features.row(i), data.responses.row(i))))?;
        let i = candidates[best];
        let (x, y, value) = match refine {
            Some(loss_grad) if config.max_iters > 0 => {
                let mut start = data.features.row(i).to_vec();
                start.extend_from_slice(data.responses.row(i));
                let outcome = descend(
                    start,
                    &config.descent(),
                    |params| {
                        let (x, y) = split_params(params, d);
                        let (v, g) = loss_grad(&ctx, current, x, y)?;
                        Ok((v, flatten(&g, p)))
                    },
                    |_| Ok(None),
                )?;
                let value = *outcome.trace.last().expect("trace holds the starting value");
                let (x, y) = split_params(&outcome.params, d);
                (x.to_vec(), y.to_vec(), value)
            }
            _ => (data.features.row(i).to_vec(), data.responses.row(i).to_vec(), best_loss),
        };
        features.push(&x)?;
        responses.push(&y)?;
        trace.push(value);
    }
    Ok(CompressedSet { features, responses, method: config.method, objective_trace: trace, seed: config.seed })
}

/// Joint kernel herding with gradient refinement of each new pair.
pub fn run_jkh(data: Pairs<'_>, kernels: KernelPair, config: &CompressionConfig) -> Result<CompressedSet> {
    expect_method(config, &[Method::Jkh])?;
    if !kernels.feature.is_differentiable() || !kernels.response.is_differentiable() {
        return Err(Error::Unsupported("JKH needs differentiable kernels; use JKH_GradFree".into()));
    }
    herd(data, kernels, config, jkh_loss, Some(jkh_loss_and_grad))
}

/// Average conditional kernel herding with gradient refinement. Under an
/// indicator response kernel only the features are refined.
pub fn run_ackh(data: Pairs<'_>, kernels: KernelPair, config: &CompressionConfig) -> Result<CompressedSet> {
    expect_method(config, &[Method::Ackh])?;
    if !kernels.feature.is_differentiable() {
        return Err(Error::Unsupported("ACKH needs a differentiable feature kernel; use ACKH_GradFree".into()));
    }
    herd(data, kernels, config, ackh_loss, Some(ackh_loss_and_grad))
}

/// Best-of-`C` herding restricted to data pairs.
pub fn run_herding_gradfree(
    data: Pairs<'_>,
    kernels: KernelPair,
    config: &CompressionConfig,
    conditional: bool,
) -> Result<CompressedSet> {
    let (method, loss): (Method, HerdingLoss) =
        if conditional { (Method::AckhGradFree, ackh_loss) } else { (Method::JkhGradFree, jkh_loss) };
    expect_method(config, &[method])?;
    herd(data, kernels, config, loss, None)
}

// ---------------------------------------------------------------------------
// Inducing points

type SetLoss = fn(&ObjectiveContext<'_>, Pairs<'_>) -> Result<f64>;
type SetLossGrad = fn(&ObjectiveContext<'_>, Pairs<'_>) -> Result<(f64, GradientPair)>;

/// Best of `C` uniformly drawn size-`m` subsets.
fn initial_subset(
    ctx: &ObjectiveContext<'_>,
    data: Pairs<'_>,
    config: &CompressionConfig,
    loss: SetLoss,
) -> Result<(Points, Points, f64)> {
    let m = config.target_size;
    if m > data.len() {
        return invalid(format!("target size {m} exceeds the {} available pairs", data.len()));
    }
    let mut rng = stream(config.seed, "inducing-candidates");
    let mut best: Option<(Points, Points, f64)> = None;
    for _ in 0..config.candidate_count {
        let idx = sample_indices(&mut rng, data.len(), m);
        let (x, y) = (data.features.select(&idx), data.responses.select(&idx));
        let v = loss(ctx, Pairs { features: &x, responses: &y })?;
        if best.as_ref().is_none_or(|b| v < b.2) {
            best = Some((x, y, v));
        }
    }
    Ok(best.expect("candidate_count >= 1"))
}

fn inducing_points(
    data: Pairs<'_>,
    kernels: KernelPair,
    config: &CompressionConfig,
    loss: SetLoss,
    loss_grad: SetLossGrad,
) -> Result<CompressedSet> {
    check_data(&data)?;
    let ctx = config.context(data, kernels)?;
    let (x0, y0, v0) = initial_subset(&ctx, data, config, loss)?;
    let (m, d, p) = (x0.len(), x0.dim(), y0.dim());
    if config.max_iters == 0 {
        return Ok(CompressedSet {
            features: x0,
            responses: y0,
            method: config.method,
            objective_trace: vec![v0],
            seed: config.seed,
        });
    }
    let mut start = x0.into_vec();
    start.extend_from_slice(y0.as_slice());
    let unpack = |params: &[f64]| -> Result<(Points, Points)> {
        let (xs, ys) = params.split_at(m * d);
        Ok((Points::new(xs.to_vec(), m, d)?, Points::new(ys.to_vec(), m, p)?))
    };
    let outcome = descend(
        start,
        &config.descent(),
        |params| {
            let (x, y) = unpack(params)?;
            let (v, g) = loss_grad(&ctx, Pairs { features: &x, responses: &y })?;
            Ok((v, flatten(&g, m * p)))
        },
        |_| Ok(None),
    )?;
    let (features, responses) = unpack(&outcome.params)?;
    Ok(CompressedSet { features, responses, method: config.method, objective_trace: outcome.trace, seed: config.seed })
}

/// Joint kernel inducing points.
pub fn run_jkip(data: Pairs<'_>, kernels: KernelPair, config: &CompressionConfig) -> Result<CompressedSet> {
    expect_method(config, &[Method::Jkip])?;
    if !kernels.feature.is_differentiable() {
        return Err(Error::Unsupported("JKIP needs a differentiable feature kernel".into()));
    }
    if kernels.response.is_indicator() {
        return Err(Error::Unsupported("JKIP with an indicator response kernel is JKIP_Discrete".into()));
    }
    inducing_points(data, kernels, config, jkip_loss, jkip_loss_and_grad)
}

/// Average conditional kernel inducing points.
pub fn run_ackip(data: Pairs<'_>, kernels: KernelPair, config: &CompressionConfig) -> Result<CompressedSet> {
    expect_method(config, &[Method::Ackip])?;
    if !kernels.feature.is_differentiable() {
        return Err(Error::Unsupported("ACKIP needs a differentiable feature kernel".into()));
    }
    if kernels.response.is_indicator() {
        return Err(Error::Unsupported("ACKIP with an indicator response kernel is ACKIP_Discrete".into()));
    }
    inducing_points(data, kernels, config, ackip_loss, ackip_loss_and_grad)
}

/// Inducing points over discrete labels: a gradient step on the features,
/// then a sweep over the labels setting each to its best class in turn.
pub fn run_kip_discrete(
    data: Pairs<'_>,
    kernels: KernelPair,
    config: &CompressionConfig,
    conditional: bool,
) -> Result<CompressedSet> {
    let method = if conditional { Method::AckipDiscrete } else { Method::JkipDiscrete };
    expect_method(config, &[method])?;
    if !kernels.response.is_indicator() {
        return invalid(format!("{method} needs the indicator response kernel"));
    }
    if data.responses.dim() != 1 {
        return invalid(format!("{method} needs a single label column"));
    }
    if !kernels.feature.is_differentiable() {
        return Err(Error::Unsupported(format!("{method} needs a differentiable feature kernel")));
    }
    check_data(&data)?;
    let ctx = config.context(data, kernels)?;
    let (loss, loss_grad): (SetLoss, SetLossGrad) =
        if conditional { (ackip_loss, ackip_loss_and_grad) } else { (jkip_loss, jkip_loss_and_grad) };
    let (x0, y0, v0) = initial_subset(&ctx, data, config, loss)?;
    let (m, d) = (x0.len(), x0.dim());
    if config.max_iters == 0 {
        return Ok(CompressedSet { features: x0, responses: y0, method, objective_trace: vec![v0], seed: config.seed });
    }
    // Labels ride along in the parameter vector with zero gradient, so a
    // rejected step also restores them.
    let mut start = x0.into_vec();
    start.extend_from_slice(y0.as_slice());
    let unpack = |params: &[f64]| -> Result<(Points, Points)> {
        let (xs, ys) = params.split_at(m * d);
        Ok((Points::new(xs.to_vec(), m, d)?, Points::new(ys.to_vec(), m, 1)?))
    };
    let evaluate = |params: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (x, y) = unpack(params)?;
        let (v, g) = loss_grad(&ctx, Pairs { features: &x, responses: &y })?;
        Ok((v, flatten(&g, m)))
    };
    let sweep = |params: &mut [f64]| -> Result<Option<(f64, Vec<f64>)>> {
        let (x, y) = unpack(params)?;
        let set = Pairs { features: &x, responses: &y };
        let scorer =
            if conditional { LabelScorer::ackip(&ctx, set, false)? } else { LabelScorer::jkip(&ctx, set, false)? };
        let labels = &mut params[m * d..];
        for t in 0..m {
            labels[t] = scorer.best_label(labels, t);
        }
        evaluate(params).map(Some)
    };
    let outcome = descend(start, &config.descent(), evaluate, sweep)?;
    let (features, responses) = unpack(&outcome.params)?;
    Ok(CompressedSet { features, responses, method, objective_trace: outcome.trace, seed: config.seed })
}
