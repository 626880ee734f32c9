//! The exactly integrable scalar scenario: Gaussian kernels,
//! `X ~ N(μ, σ²)` and `Y | X = x ~ N(a₀ + a₁x, σ_ε²)`.
//!
//! Every expectation reduces to a one-dimensional Gaussian integral
//! `∫ N(x; μ, σ²) exp(−½(A x² − 2B x + C)) dx = exp(B²/(2A) − C/2) / √(σ²A)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::LabelledDataset;
use crate::error::{invalid, Result};
use crate::kernels::{gram_symmetric, KernelPair, KernelSpec};
use crate::linalg::RegularisedSolver;
use crate::points::{Pairs, Points};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticScenario {
    pub mu: f64,
    pub sigma2: f64,
    pub a0: f64,
    pub a1: f64,
    pub sigma_eps2: f64,
    pub alpha_k: f64,
    pub alpha_l: f64,
}

impl Default for AnalyticScenario {
    fn default() -> Self {
        Self { mu: 1.0, sigma2: 1.0, a0: -0.5, a1: 0.5, sigma_eps2: 0.5, alpha_k: 1.0, alpha_l: 1.0 }
    }
}

impl AnalyticScenario {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mu, self.sigma2, self.a0, self.a1, self.sigma_eps2, self.alpha_k, self.alpha_l];
        if all.iter().any(|v| !v.is_finite()) {
            return invalid("scenario parameters must be finite");
        }
        if !(self.sigma2 > 0.0) || self.sigma_eps2 < 0.0 || !(self.alpha_k > 0.0) || !(self.alpha_l > 0.0) {
            return invalid("variances must be non-negative and σ², lengthscales positive");
        }
        Ok(())
    }

    pub fn kernels(&self) -> Result<KernelPair> {
        Ok(KernelPair::new(KernelSpec::gaussian(self.alpha_k)?, KernelSpec::gaussian(self.alpha_l)?))
    }

    pub fn conditional_mean(&self, x: f64) -> f64 {
        self.a0 + self.a1 * x
    }

    /// `∫ N(x; μ, σ²) exp(−½(A x² − 2B x + C)) dx` where the quadratic
    /// collects the kernel factors only.
    fn gaussian_integral(&self, a: f64, b: f64, c: f64) -> f64 {
        let a = a + 1.0 / self.sigma2;
        let b = b + self.mu / self.sigma2;
        let c = c + self.mu * self.mu / self.sigma2;
        (b * b / (2.0 * a) - c / 2.0).exp() / (self.sigma2 * a).sqrt()
    }
}

/// `E_x[k(x, x₁) k(x, x₂)]`.
pub fn marginal_double_kernel_expectation(s: &AnalyticScenario, x1: f64, x2: f64) -> f64 {
    let ak2 = s.alpha_k * s.alpha_k;
    s.gaussian_integral(2.0 / ak2, (x1 + x2) / ak2, (x1 * x1 + x2 * x2) / ak2)
}

/// `E_{(x,y)}[k(x, x₁) l(y, y₁)]`.
pub fn joint_kernel_expectation(s: &AnalyticScenario, x1: f64, y1: f64) -> f64 {
    // Integrating out y leaves sqrt(α_l²/v) exp(−(a₀ + a₁x − y₁)²/(2v)).
    let ak2 = s.alpha_k * s.alpha_k;
    let v = s.alpha_l * s.alpha_l + s.sigma_eps2;
    let shift = y1 - s.a0;
    let inner = s.gaussian_integral(
        1.0 / ak2 + s.a1 * s.a1 / v,
        x1 / ak2 + s.a1 * shift / v,
        x1 * x1 / ak2 + shift * shift / v,
    );
    (s.alpha_l * s.alpha_l / v).sqrt() * inner
}

/// `E_x ‖μ_{Y|X=x}‖²`, constant in `x`.
pub fn exact_embedding_norm_expectation(s: &AnalyticScenario) -> f64 {
    let al2 = s.alpha_l * s.alpha_l;
    ((s.sigma_eps2 + al2) / ((1.0 + s.sigma_eps2 / al2) * (2.0 * s.sigma_eps2 + al2))).sqrt()
}

/// `E_x ‖μ_{Y|X=x} − μ̃_{Y|X=x}‖²` for the embedding fitted on `set` with
/// regulariser `lambda`.
pub fn exact_amcmd_squared(s: &AnalyticScenario, set: Pairs<'_>, lambda: f64) -> Result<f64> {
    s.validate()?;
    if set.is_empty() || set.features.dim() != 1 || set.responses.dim() != 1 {
        return invalid("the exact scenario needs a non-empty scalar set");
    }
    let kernels = s.kernels()?;
    let m = set.len();
    let kx = gram_symmetric(&kernels.feature, set.features);
    let ly = gram_symmetric(&kernels.response, set.responses);
    let w = RegularisedSolver::new(kx.as_ref(), lambda)?.inverse();
    let (xs, ys) = (set.features.as_slice(), set.responses.as_slice());
    let mut cross = 0.0;
    for i in 0..m {
        for j in 0..m {
            cross += w[(i, j)] * joint_kernel_expectation(s, xs[i], ys[j]);
        }
    }
    let wlw = &w * &ly * &w;
    let mut quad = 0.0;
    for i in 0..m {
        for p in 0..m {
            quad += wlw[(i, p)] * marginal_double_kernel_expectation(s, xs[i], xs[p]);
        }
    }
    Ok(exact_embedding_norm_expectation(s) - 2.0 * cross + quad)
}

/// `n` i.i.d. pairs from the scenario.
pub fn sample_scenario(s: &AnalyticScenario, n: usize, seed: u64) -> Result<LabelledDataset> {
    s.validate()?;
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let mut rx = stream(seed, "analytic-x");
    let mut ry = stream(seed, "analytic-y");
    let (sd_x, sd_e) = (s.sigma2.sqrt(), s.sigma_eps2.sqrt());
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = s.mu + sd_x * rx.sample::<f64, _>(StandardNormal);
        xs.push(x);
        ys.push(s.conditional_mean(x) + sd_e * ry.sample::<f64, _>(StandardNormal));
    }
    LabelledDataset::new(Points::from_scalars(&xs), Points::from_scalars(&ys), false)
}
