//! Compression objectives, their analytic gradients, and the per-label
//! scores used when responses are discrete.
//!
//! Notation: the full data are `(X, Y)` with `n` rows, the compressed set is
//! `(X̃, Ỹ)` with `m` rows, `K̃ = K_{X̃X̃}`, `L̃ = L_{ỸỸ}`, `B = K_{X̃X}` and
//! `W = (K̃ + λI)⁻¹`.
//!
//! * joint herding: `(1/(m+1)) Σ_j k(x, x̃_j) l(y, ỹ_j) − (1/n) Σ_i k(x, x_i) l(y, y_i)`
//! * joint inducing points: `(1/m²) Σ K̃ ∘ L̃ − (2/(mn)) Σ_{ir} k(x̃_i, x_r) l(ỹ_i, y_r)`
//! * conditional inducing points: `(1/n) Tr(W L̃ W B Bᵀ) − (2/n) Tr(W B L_{YỸ})`
//! * conditional herding: the conditional inducing-points objective on the
//!   current set with the candidate appended last.

use faer::Mat;

use crate::error::{invalid, Error, Result};
use crate::kernels::{gram_matrix, gram_symmetric, KernelPair, KernelSpec};
use crate::linalg::{frobenius_dot, RegularisedSolver};
use crate::points::{Pairs, Points};

/// The full data set an objective is estimated on.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveContext<'a> {
    pub data: Pairs<'a>,
    pub kernels: KernelPair,
    /// Regulariser for the conditional objectives.
    pub lambda: Option<f64>,
}

impl<'a> ObjectiveContext<'a> {
    pub fn joint(data: Pairs<'a>, kernels: KernelPair) -> Result<Self> {
        Self::build(data, kernels, None)
    }

    pub fn conditional(data: Pairs<'a>, kernels: KernelPair, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return invalid(format!("regulariser must be positive, got {lambda}"));
        }
        Self::build(data, kernels, Some(lambda))
    }

    fn build(data: Pairs<'a>, kernels: KernelPair, lambda: Option<f64>) -> Result<Self> {
        if data.is_empty() {
            return invalid("objective needs at least one data pair");
        }
        kernels.feature.validate()?;
        kernels.response.validate()?;
        kernels.feature.check_points(data.features)?;
        kernels.response.check_points(data.responses)?;
        Ok(Self { data, kernels, lambda })
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    fn lambda(&self) -> Result<f64> {
        self.lambda.ok_or_else(|| Error::InvalidInput("conditional objective needs a regulariser".into()))
    }

    fn check_set(&self, set: &Pairs<'_>, allow_empty: bool) -> Result<()> {
        if set.is_empty() && !allow_empty {
            return invalid("compressed set is empty");
        }
        if set.features.dim() != self.data.features.dim() || set.responses.dim() != self.data.responses.dim() {
            return invalid("compressed set dimensions differ from the data");
        }
        self.kernels.feature.check_points(set.features)?;
        self.kernels.response.check_points(set.responses)
    }

    fn check_candidate(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.data.features.dim() || y.len() != self.data.responses.dim() {
            return invalid("candidate dimensions differ from the data");
        }
        self.kernels.feature.eval(x, x)?;
        self.kernels.response.eval(y, y)?;
        if !x.iter().chain(y).all(|v| v.is_finite()) {
            return invalid("candidate contains non-finite values");
        }
        Ok(())
    }
}

/// Gradient with respect to the optimised features and responses. Responses
/// carry no gradient under the indicator kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub d_features: Points,
    pub d_responses: Option<Points>,
}

impl GradientPair {
    pub fn is_finite(&self) -> bool {
        self.d_features.is_finite() && self.d_responses.as_ref().is_none_or(Points::is_finite)
    }
}

fn response_grad_rows(kernel: &KernelSpec, rows: usize, dim: usize) -> Option<Points> {
    kernel.is_differentiable().then(|| Points::zeros(rows, dim))
}

// ---------------------------------------------------------------------------
// Joint herding

pub fn jkh_loss(ctx: &ObjectiveContext<'_>, current: Pairs<'_>, x: &[f64], y: &[f64]) -> Result<f64> {
    ctx.check_set(&current, true)?;
    ctx.check_candidate(x, y)?;
    let kp = &ctx.kernels;
    let m = current.len() as f64;
    let own: f64 = current.features.rows().zip(current.responses.rows()).map(|(a, b)| kp.joint(x, y, a, b)).sum();
    let data: f64 = ctx.data.features.rows().zip(ctx.data.responses.rows()).map(|(a, b)| kp.joint(x, y, a, b)).sum();
    Ok(own / (m + 1.0) - data / ctx.n() as f64)
}

pub fn jkh_grad(ctx: &ObjectiveContext<'_>, current: Pairs<'_>, x: &[f64], y: &[f64]) -> Result<GradientPair> {
    jkh_loss_and_grad(ctx, current, x, y).map(|(_, g)| g)
}

pub fn jkh_loss_and_grad(
    ctx: &ObjectiveContext<'_>,
    current: Pairs<'_>,
    x: &[f64],
    y: &[f64],
) -> Result<(f64, GradientPair)> {
    ctx.check_set(&current, true)?;
    ctx.check_candidate(x, y)?;
    let kp = &ctx.kernels;
    if !kp.feature.is_differentiable() || !kp.response.is_differentiable() {
        return Err(Error::Unsupported("joint herding gradients need differentiable kernels".into()));
    }
    let mut gx = vec![0.0; x.len()];
    let mut gy = vec![0.0; y.len()];
    let mut loss = 0.0;
    let mut accumulate = |pairs: &Pairs<'_>, weight: f64| {
        for (a, b) in pairs.features.rows().zip(pairs.responses.rows()) {
            let kv = kp.feature.value(x, a);
            let lv = kp.response.value(y, b);
            loss += weight * kv * lv;
            kp.feature.accumulate_grad(x, a, weight * lv, &mut gx);
            kp.response.accumulate_grad(y, b, weight * kv, &mut gy);
        }
    };
    accumulate(&current, 1.0 / (current.len() as f64 + 1.0));
    accumulate(&ctx.data, -1.0 / ctx.n() as f64);
    let grad =
        GradientPair { d_features: Points::new(gx, 1, x.len())?, d_responses: Some(Points::new(gy, 1, y.len())?) };
    Ok((loss, grad))
}

// ---------------------------------------------------------------------------
// Joint inducing points

pub fn jkip_loss(ctx: &ObjectiveContext<'_>, set: Pairs<'_>) -> Result<f64> {
    ctx.check_set(&set, false)?;
    let kp = &ctx.kernels;
    let (m, n) = (set.len() as f64, ctx.n() as f64);
    let kt = gram_symmetric(&kp.feature, set.features);
    let lt = gram_symmetric(&kp.response, set.responses);
    let mut cross = 0.0;
    for (a, b) in set.features.rows().zip(set.responses.rows()) {
        for (xr, yr) in ctx.data.features.rows().zip(ctx.data.responses.rows()) {
            cross += kp.joint(a, b, xr, yr);
        }
    }
    Ok(frobenius_dot(kt.as_ref(), lt.as_ref()) / (m * m) - 2.0 * cross / (m * n))
}

pub fn jkip_grad(ctx: &ObjectiveContext<'_>, set: Pairs<'_>) -> Result<GradientPair> {
    jkip_loss_and_grad(ctx, set).map(|(_, g)| g)
}

/// Value and gradient in one pass; `O(m² + mn)` kernel evaluations.
pub fn jkip_loss_and_grad(ctx: &ObjectiveContext<'_>, set: Pairs<'_>) -> Result<(f64, GradientPair)> {
    ctx.check_set(&set, false)?;
    let kp = &ctx.kernels;
    if !kp.feature.is_differentiable() {
        return Err(Error::Unsupported("feature kernel is not differentiable".into()));
    }
    let (m, n) = (set.len(), ctx.n());
    let (d, p) = (set.features.dim(), set.responses.dim());
    let mut gx = Points::zeros(m, d);
    let mut gy = response_grad_rows(&kp.response, m, p);
    let self_w = 2.0 / (m * m) as f64;
    let cross_w = -2.0 / (m * n) as f64;
    let mut loss = 0.0;
    for q in 0..m {
        let (xq, yq) = (set.features.row(q), set.responses.row(q));
        let mut step = |xb: &[f64], yb: &[f64], weight: f64, loss_weight: f64| {
            let kv = kp.feature.accumulate_grad(xq, xb, weight * kp.response.value(yq, yb), gx.row_mut(q));
            let lv = kp.response.value(yq, yb);
            loss += loss_weight * kv * lv;
            if let Some(gy) = gy.as_mut() {
                kp.response.accumulate_grad(yq, yb, weight * kv, gy.row_mut(q));
            }
        };
        for b in 0..m {
            step(set.features.row(b), set.responses.row(b), self_w, 0.5 * self_w);
        }
        for r in 0..n {
            step(ctx.data.features.row(r), ctx.data.responses.row(r), cross_w, cross_w);
        }
    }
    Ok((loss, GradientPair { d_features: gx, d_responses: gy }))
}

// ---------------------------------------------------------------------------
// Conditional inducing points and herding

/// Matrices shared by the conditional objective's value and gradient.
struct ConditionalTerms {
    /// `W = (K̃ + λI)⁻¹`
    w: Mat<f64>,
    /// `L̃`
    lt: Mat<f64>,
    /// `B = K_{X̃X}`, `m × n`
    b: Mat<f64>,
    /// `L_{ỸY}`, `m × n`
    ly: Mat<f64>,
    /// `G = B Bᵀ`
    g: Mat<f64>,
    /// `H = B L_{YỸ}`
    h: Mat<f64>,
}

impl ConditionalTerms {
    fn new(ctx: &ObjectiveContext<'_>, set: &Pairs<'_>) -> Result<Self> {
        let kp = &ctx.kernels;
        let kt = gram_symmetric(&kp.feature, set.features);
        let w = RegularisedSolver::new(kt.as_ref(), ctx.lambda()?)?.inverse();
        let lt = gram_symmetric(&kp.response, set.responses);
        let b = gram_matrix(&kp.feature, set.features, ctx.data.features);
        let ly = gram_matrix(&kp.response, set.responses, ctx.data.responses);
        let g = &b * b.transpose();
        let h = &b * ly.transpose();
        Ok(Self { w, lt, b, ly, g, h })
    }

    fn loss(&self, n: f64) -> f64 {
        let p = &self.w * &self.lt * &self.w;
        (frobenius_dot(p.as_ref(), self.g.as_ref()) - 2.0 * frobenius_dot(self.w.as_ref(), self.h.as_ref())) / n
    }
}

pub fn ackip_loss(ctx: &ObjectiveContext<'_>, set: Pairs<'_>) -> Result<f64> {
    ctx.check_set(&set, false)?;
    Ok(ConditionalTerms::new(ctx, &set)?.loss(ctx.n() as f64))
}

pub fn ackip_grad(ctx: &ObjectiveContext<'_>, set: Pairs<'_>) -> Result<GradientPair> {
    ackip_loss_and_grad(ctx, set).map(|(_, g)| g)
}

/// Value and gradient; `O(m³ + m²n)` time.
pub fn ackip_loss_and_grad(ctx: &ObjectiveContext<'_>, set: Pairs<'_>) -> Result<(f64, GradientPair)> {
    ackip_rows(ctx, set, 0)
}

/// Gradient rows `first..m` of the conditional objective.
fn ackip_rows(ctx: &ObjectiveContext<'_>, set: Pairs<'_>, first: usize) -> Result<(f64, GradientPair)> {
    ctx.check_set(&set, false)?;
    let kp = &ctx.kernels;
    if !kp.feature.is_differentiable() {
        return Err(Error::Unsupported("feature kernel is not differentiable".into()));
    }
    let n = ctx.n() as f64;
    let t = ConditionalTerms::new(ctx, &set)?;
    let w = &t.w;
    let p = w * &t.lt * w;
    let gw = &t.g * w;
    let hw = &t.h * w;
    // Coefficients of dK̃ (symmetrised) and of dB.
    let pgw = &p * &gw;
    let whw = w * &hw;
    let f = Mat::from_fn(w.nrows(), w.ncols(), |i, j| (-(pgw[(i, j)] + pgw[(j, i)]) + whw[(i, j)] + whw[(j, i)]) / n);
    let pb = &p * &t.b;
    let wly = w * &t.ly;
    let loss = (frobenius_dot(p.as_ref(), t.g.as_ref()) - 2.0 * frobenius_dot(w.as_ref(), t.h.as_ref())) / n;

    let rows = set.len() - first;
    let (d, pdim) = (set.features.dim(), set.responses.dim());
    let mut gx = Points::zeros(rows, d);
    for q in first..set.len() {
        let xq = set.features.row(q);
        let out = gx.row_mut(q - first);
        for bidx in 0..set.len() {
            kp.feature.accumulate_grad(xq, set.features.row(bidx), 2.0 * f[(q, bidx)], out);
        }
        for r in 0..ctx.n() {
            let coef = 2.0 / n * (pb[(q, r)] - wly[(q, r)]);
            kp.feature.accumulate_grad(xq, ctx.data.features.row(r), coef, out);
        }
    }
    let gy = if kp.response.is_differentiable() {
        let wgw = w * &gw;
        let wb = w * &t.b;
        let mut gy = Points::zeros(rows, pdim);
        for q in first..set.len() {
            let yq = set.responses.row(q);
            let out = gy.row_mut(q - first);
            for bidx in 0..set.len() {
                kp.response.accumulate_grad(yq, set.responses.row(bidx), 2.0 / n * wgw[(q, bidx)], out);
            }
            for r in 0..ctx.n() {
                kp.response.accumulate_grad(yq, ctx.data.responses.row(r), -2.0 / n * wb[(q, r)], out);
            }
        }
        Some(gy)
    } else {
        None
    };
    Ok((loss, GradientPair { d_features: gx, d_responses: gy }))
}

fn augmented(current: &Pairs<'_>, x: &[f64], y: &[f64]) -> Result<(Points, Points)> {
    Ok((current.features.with_row(x)?, current.responses.with_row(y)?))
}

pub fn ackh_loss(ctx: &ObjectiveContext<'_>, current: Pairs<'_>, x: &[f64], y: &[f64]) -> Result<f64> {
    ctx.check_set(&current, true)?;
    ctx.check_candidate(x, y)?;
    let (fx, fy) = augmented(&current, x, y)?;
    ackip_loss(ctx, Pairs::new(&fx, &fy)?)
}

pub fn ackh_grad(ctx: &ObjectiveContext<'_>, current: Pairs<'_>, x: &[f64], y: &[f64]) -> Result<GradientPair> {
    ackh_loss_and_grad(ctx, current, x, y).map(|(_, g)| g)
}

/// Candidate occupies the last slot of the augmented set; only its gradient
/// row is formed.
pub fn ackh_loss_and_grad(
    ctx: &ObjectiveContext<'_>,
    current: Pairs<'_>,
    x: &[f64],
    y: &[f64],
) -> Result<(f64, GradientPair)> {
    ctx.check_set(&current, true)?;
    ctx.check_candidate(x, y)?;
    let (fx, fy) = augmented(&current, x, y)?;
    ackip_rows(ctx, Pairs::new(&fx, &fy)?, current.len())
}

// ---------------------------------------------------------------------------
// Discrete responses

fn check_labels(ctx: &ObjectiveContext<'_>, set: &Pairs<'_>, t: usize) -> Result<()> {
    if !ctx.kernels.response.is_indicator() {
        return Err(Error::Unsupported("per-label scores need the indicator response kernel".into()));
    }
    ctx.check_set(set, false)?;
    if set.responses.dim() != 1 {
        return invalid("per-label scores need scalar labels");
    }
    if t >= set.len() {
        return invalid(format!("label index {t} out of range for a set of {}", set.len()));
    }
    Ok(())
}

fn check_label(label: f64) -> Result<()> {
    if label.is_finite() && label.fract() == 0.0 {
        Ok(())
    } else {
        invalid(format!("labels must be integers, got {label}"))
    }
}

/// `ỹ_t`-dependent part of the joint inducing-points objective with
/// `ỹ_t := label`, evaluated directly in `O(m + n)`.
///
/// The self term `K̃_tt l(c, c)` is constant in `c` for the indicator kernel
/// and is left out by default. With `diagonal_correction` it is added back
/// with weight `1/m²`, so score differences equal objective differences.
pub fn jkip_response_score(
    ctx: &ObjectiveContext<'_>,
    set: Pairs<'_>,
    t: usize,
    label: f64,
    diagonal_correction: bool,
) -> Result<f64> {
    check_labels(ctx, &set, t)?;
    check_label(label)?;
    let k = &ctx.kernels.feature;
    let (m, n) = (set.len() as f64, ctx.n() as f64);
    let xt = set.features.row(t);
    let mut own = 0.0;
    for j in 0..set.len() {
        if j != t && set.responses.row(j)[0] == label {
            own += k.value(xt, set.features.row(j));
        }
    }
    let mut cross = 0.0;
    for r in 0..ctx.n() {
        if ctx.data.responses.row(r)[0] == label {
            cross += k.value(xt, ctx.data.features.row(r));
        }
    }
    let mut score = 2.0 * own / (m * m) - 2.0 * cross / (m * n);
    if diagonal_correction {
        score += k.value(xt, xt) / (m * m);
    }
    Ok(score)
}

/// `ỹ_t`-dependent part of the conditional inducing-points objective,
/// evaluated directly. With `M = W B Bᵀ W` and `N = Bᵀ W` this is
/// `(2/n)[Σ_{p≠t} l(c, ỹ_p) M_pt − Σ_r l(c, y_r) N_rt]`, plus
/// `(1/n) M_tt l(c, c)` under `diagonal_correction`.
pub fn ackip_response_score(
    ctx: &ObjectiveContext<'_>,
    set: Pairs<'_>,
    t: usize,
    label: f64,
    diagonal_correction: bool,
) -> Result<f64> {
    check_labels(ctx, &set, t)?;
    check_label(label)?;
    let terms = ConditionalTerms::new(ctx, &set)?;
    let m_mat = &terms.w * &terms.g * &terms.w;
    let wb = &terms.w * &terms.b;
    let n = ctx.n() as f64;
    let mut own = 0.0;
    for p in 0..set.len() {
        if p != t && set.responses.row(p)[0] == label {
            own += m_mat[(p, t)];
        }
    }
    let mut cross = 0.0;
    for r in 0..ctx.n() {
        if ctx.data.responses.row(r)[0] == label {
            cross += wb[(t, r)];
        }
    }
    let mut score = 2.0 / n * (own - cross);
    if diagonal_correction {
        score += m_mat[(t, t)] / n;
    }
    Ok(score)
}

/// Distinct labels of a scalar response column, ascending.
pub fn label_set(responses: &Points) -> Result<Vec<f64>> {
    if responses.dim() != 1 {
        return invalid("labels must be a single column");
    }
    let mut labels: Vec<f64> = responses.as_slice().to_vec();
    for &l in &labels {
        check_label(l)?;
    }
    labels.sort_by(f64::total_cmp);
    labels.dedup();
    Ok(labels)
}

/// Precomputed per-label scores for one fixed `X̃`.
///
/// Both objectives share the shape
/// `score(c) = a Σ_{p ≠ t: ỹ_p = c} S_pt − b Σ_{r: y_r = c} T_rt (+ e S_tt)`,
/// so the `n`-sums are tabulated per label up front and each score costs
/// `O(m)`.
#[derive(Debug, Clone)]
pub struct LabelScorer {
    labels: Vec<f64>,
    /// `S`, `m × m`
    own: Mat<f64>,
    /// `cross[c][t] = Σ_{r: y_r = labels[c]} T_rt`
    cross: Vec<Vec<f64>>,
    own_weight: f64,
    cross_weight: f64,
    diagonal_weight: f64,
}

impl LabelScorer {
    /// Scorer for the joint inducing-points objective.
    pub fn jkip(ctx: &ObjectiveContext<'_>, set: Pairs<'_>, diagonal_correction: bool) -> Result<Self> {
        check_labels(ctx, &set, 0)?;
        let k = &ctx.kernels.feature;
        let own = gram_symmetric(k, set.features);
        let b = gram_matrix(k, set.features, ctx.data.features);
        let (m, n) = (set.len() as f64, ctx.n() as f64);
        let diagonal_weight = if diagonal_correction { 1.0 / (m * m) } else { 0.0 };
        Self::build(ctx, own, |t, r| b[(t, r)], set.len(), 2.0 / (m * m), 2.0 / (m * n), diagonal_weight)
    }

    /// Scorer for the conditional inducing-points objective.
    pub fn ackip(ctx: &ObjectiveContext<'_>, set: Pairs<'_>, diagonal_correction: bool) -> Result<Self> {
        check_labels(ctx, &set, 0)?;
        let terms = ConditionalTerms::new(ctx, &set)?;
        let own = &terms.w * &terms.g * &terms.w;
        let wb = &terms.w * &terms.b;
        let n = ctx.n() as f64;
        let diagonal_weight = if diagonal_correction { 1.0 / n } else { 0.0 };
        Self::build(ctx, own, |t, r| wb[(t, r)], set.len(), 2.0 / n, 2.0 / n, diagonal_weight)
    }

    fn build(
        ctx: &ObjectiveContext<'_>,
        own: Mat<f64>,
        cross_entry: impl Fn(usize, usize) -> f64,
        m: usize,
        own_weight: f64,
        cross_weight: f64,
        diagonal_weight: f64,
    ) -> Result<Self> {
        let labels = label_set(ctx.data.responses)?;
        let mut cross = vec![vec![0.0; m]; labels.len()];
        for r in 0..ctx.n() {
            let y = ctx.data.responses.row(r)[0];
            let c = labels.partition_point(|&l| l < y);
            for (t, v) in cross[c].iter_mut().enumerate() {
                *v += cross_entry(t, r);
            }
        }
        Ok(Self { labels, own, cross, own_weight, cross_weight, diagonal_weight })
    }

    /// Candidate labels: those present in the data, ascending.
    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Score of setting `ỹ_t := label` given the current labels.
    pub fn score(&self, current: &[f64], t: usize, label: f64) -> f64 {
        let mut own = 0.0;
        for (p, &yp) in current.iter().enumerate() {
            if p != t && yp == label {
                own += self.own[(p, t)];
            }
        }
        let cross = match self.labels.binary_search_by(|l| l.total_cmp(&label)) {
            Ok(c) => self.cross[c][t],
            Err(_) => 0.0,
        };
        self.own_weight * own - self.cross_weight * cross + self.diagonal_weight * self.own[(t, t)]
    }

    /// Lowest-scoring label for slot `t`; ties go to the smallest label.
    pub fn best_label(&self, current: &[f64], t: usize) -> f64 {
        let mut best = (f64::INFINITY, self.labels[0]);
        for &c in &self.labels {
            let s = self.score(current, t, c);
            if s < best.0 {
                best = (s, c);
            }
        }
        best.1
    }
}
