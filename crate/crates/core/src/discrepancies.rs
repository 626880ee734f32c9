//! Closed-form JMMD² and AMCMD² estimators.

use faer::Mat;

use crate::embeddings::{check_compatible, KcmeModel};
use crate::error::{invalid, Result};
use crate::kernels::{gram_matrix, gram_symmetric, KernelPair};
use crate::linalg::frobenius_dot;
use crate::points::{Pairs, Points};

fn check_sample(kernels: &KernelPair, s: &Pairs<'_>) -> Result<()> {
    if s.is_empty() {
        return invalid("empty sample");
    }
    kernels.feature.check_points(s.features)?;
    kernels.response.check_points(s.responses)
}

/// `Σ_ij k(x_i, x'_j) l(y_i, y'_j)`.
fn joint_sum(kernels: &KernelPair, a: &Pairs<'_>, b: &Pairs<'_>) -> f64 {
    let k = gram_matrix(&kernels.feature, a.features, b.features);
    let l = gram_matrix(&kernels.response, a.responses, b.responses);
    frobenius_dot(k.as_ref(), l.as_ref())
}

/// Squared joint MMD between the empirical joint embeddings of two samples.
pub fn jmmd_squared(sample_a: Pairs<'_>, sample_b: Pairs<'_>, kernels: &KernelPair) -> Result<f64> {
    check_sample(kernels, &sample_a)?;
    check_sample(kernels, &sample_b)?;
    if sample_a.features.dim() != sample_b.features.dim() || sample_a.responses.dim() != sample_b.responses.dim() {
        return invalid("samples live on different spaces");
    }
    let (n, m) = (sample_a.len() as f64, sample_b.len() as f64);
    Ok(joint_sum(kernels, &sample_a, &sample_a) / (n * n) - 2.0 * joint_sum(kernels, &sample_a, &sample_b) / (n * m)
        + joint_sum(kernels, &sample_b, &sample_b) / (m * m))
}

/// Inputs to the AMCMD² plug-in estimate: two conditional samples with their
/// regularisers, and weighting points drawn from the conditioning law.
#[derive(Debug, Clone, Copy)]
pub struct AmcmdInputs<'a> {
    pub weighting_points: &'a Points,
    pub sample_a: Pairs<'a>,
    pub lambda_a: f64,
    pub sample_b: Pairs<'a>,
    pub lambda_b: f64,
    pub kernels: KernelPair,
}

/// `(1/q) Σ_i ‖μ̂_a(x*_i) − μ̂_b(x*_i)‖²` through the trace formula.
pub fn amcmd_squared_estimate(inputs: &AmcmdInputs<'_>) -> Result<f64> {
    let a = KcmeModel::fit(inputs.sample_a.features, inputs.sample_a.responses, inputs.kernels, inputs.lambda_a)?;
    let b = KcmeModel::fit(inputs.sample_b.features, inputs.sample_b.responses, inputs.kernels, inputs.lambda_b)?;
    amcmd_squared_between(&a, &b, inputs.weighting_points)
}

/// Square root of the clamped estimate.
pub fn amcmd_estimate(inputs: &AmcmdInputs<'_>) -> Result<f64> {
    Ok(clamp_sqrt(amcmd_squared_estimate(inputs)?))
}

pub(crate) fn clamp_sqrt(v: f64) -> f64 {
    v.max(0.0).sqrt()
}

/// AMCMD² between two fitted models over the weighting points.
///
/// With `A = W_a K_{X X*}` and `B = W_b K_{X' X*}` the three traces reduce to
/// Hadamard contractions `Σ A ∘ (L_aa A)` etc, never forming a `q × q`
/// product.
pub fn amcmd_squared_between(model_a: &KcmeModel, model_b: &KcmeModel, weighting: &Points) -> Result<f64> {
    AmcmdReference::new(model_b, weighting)?.squared_against(model_a)
}

/// One side of the AMCMD² with its weighting points, prepared once for
/// comparison against many models.
#[derive(Debug, Clone)]
pub struct AmcmdReference<'a> {
    model: &'a KcmeModel,
    weighting: &'a Points,
    /// `W_b K_{X' X*}`
    b: Mat<f64>,
    /// `Σ B ∘ (L_bb B)`
    self_term: f64,
}

impl<'a> AmcmdReference<'a> {
    pub fn new(model: &'a KcmeModel, weighting: &'a Points) -> Result<Self> {
        if weighting.is_empty() {
            return invalid("no weighting points");
        }
        if weighting.dim() != model.features().dim() {
            return invalid("weighting points have the wrong dimension");
        }
        let k = model.kernels().feature;
        k.check_points(weighting)?;
        let b = model.solver().solve(gram_matrix(&k, model.features(), weighting).as_ref());
        let lbb = gram_symmetric(&model.kernels().response, model.responses());
        let self_term = frobenius_dot(b.as_ref(), (&lbb * &b).as_ref());
        Ok(Self { model, weighting, b, self_term })
    }

    pub fn model(&self) -> &KcmeModel {
        self.model
    }

    pub fn weighting(&self) -> &Points {
        self.weighting
    }

    pub fn squared_against(&self, other: &KcmeModel) -> Result<f64> {
        let l = check_compatible(other, self.model)?;
        if other.kernels().feature != self.model.kernels().feature {
            return invalid("models use different feature kernels");
        }
        if other.features().dim() != self.weighting.dim() {
            return invalid("weighting points have the wrong dimension");
        }
        let k = other.kernels().feature;
        let q = self.weighting.len() as f64;
        let a = other.solver().solve(gram_matrix(&k, other.features(), self.weighting).as_ref());
        let laa = gram_symmetric(&l, other.responses());
        let lab = gram_matrix(&l, other.responses(), self.model.responses());
        let taa = frobenius_dot(a.as_ref(), (&laa * &a).as_ref());
        let tab = frobenius_dot(a.as_ref(), (&lab * &self.b).as_ref());
        Ok((taa - 2.0 * tab + self.self_term) / q)
    }
}

/// Set-independent constant `(1/n²) Σ_ij k(x_i, x_j) l(y_i, y_j)`.
pub fn joint_self_term(data: Pairs<'_>, kernels: &KernelPair) -> f64 {
    let n = data.len() as f64;
    let k = gram_symmetric(&kernels.feature, data.features);
    let l = gram_symmetric(&kernels.response, data.responses);
    frobenius_dot(k.as_ref(), l.as_ref()) / (n * n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::mcmd_at;
    use crate::kernels::KernelSpec;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussians() -> KernelPair {
        KernelPair::new(KernelSpec::gaussian(1.0).unwrap(), KernelSpec::gaussian(1.0).unwrap())
    }

    fn random_points(n: usize, d: usize, seed: u64) -> Points {
        let mut rng = stream(seed, "test");
        let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        Points::new(data, n, d).unwrap()
    }

    #[test]
    fn jmmd_single_pairs() {
        let (x0, y0) = (Points::from_scalars(&[0.0]), Points::from_scalars(&[0.0]));
        let (x1, y1) = (Points::from_scalars(&[1.0]), Points::from_scalars(&[1.0]));
        let a = Pairs::new(&x0, &y0).unwrap();
        let b = Pairs::new(&x1, &y1).unwrap();
        let v = jmmd_squared(a, b, &gaussians()).unwrap();
        assert!((v - (2.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-14);
        assert!((v - 1.26424).abs() < 1e-5);
        assert!(jmmd_squared(a, a, &gaussians()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn jmmd_rejects_empty() {
        let e = Points::empty(1);
        let x = Points::from_scalars(&[0.0]);
        assert!(jmmd_squared(Pairs::new(&e, &e).unwrap(), Pairs::new(&x, &x).unwrap(), &gaussians()).is_err());
    }

    #[test]
    fn amcmd_matches_mean_squared_mcmd() {
        let kp = gaussians();
        let w = random_points(3, 1, 1);
        let (xa, ya) = (random_points(3, 1, 2), random_points(3, 1, 3));
        let (xb, yb) = (random_points(2, 1, 4), random_points(2, 1, 5));
        let inputs = AmcmdInputs {
            weighting_points: &w,
            sample_a: Pairs::new(&xa, &ya).unwrap(),
            lambda_a: 0.1,
            sample_b: Pairs::new(&xb, &yb).unwrap(),
            lambda_b: 0.3,
            kernels: kp,
        };
        let trace = amcmd_squared_estimate(&inputs).unwrap();
        let ma = KcmeModel::fit(&xa, &ya, kp, 0.1).unwrap();
        let mb = KcmeModel::fit(&xb, &yb, kp, 0.3).unwrap();
        let brute: f64 = w.rows().map(|x| mcmd_at(&ma, &mb, x).unwrap().powi(2)).sum::<f64>() / 3.0;
        assert!((trace - brute).abs() < 1e-10);
        assert!((amcmd_estimate(&inputs).unwrap() - brute.sqrt()).abs() < 1e-8);

        let swapped = AmcmdInputs {
            sample_a: inputs.sample_b,
            lambda_a: inputs.lambda_b,
            sample_b: inputs.sample_a,
            lambda_b: inputs.lambda_a,
            ..inputs
        };
        assert!((amcmd_squared_estimate(&swapped).unwrap() - trace).abs() < 1e-12);
    }

    #[test]
    fn amcmd_identical_samples_vanish() {
        let w = random_points(4, 2, 6);
        let (x, y) = (random_points(5, 2, 7), random_points(5, 1, 8));
        let s = Pairs::new(&x, &y).unwrap();
        let inputs = AmcmdInputs {
            weighting_points: &w,
            sample_a: s,
            lambda_a: 0.2,
            sample_b: s,
            lambda_b: 0.2,
            kernels: gaussians(),
        };
        assert!(amcmd_squared_estimate(&inputs).unwrap().abs() < 1e-10);
        assert_eq!(amcmd_estimate(&inputs).unwrap(), clamp_sqrt(amcmd_squared_estimate(&inputs).unwrap()));
    }

    #[test]
    fn clamp_handles_round_off() {
        assert_eq!(clamp_sqrt(-1e-14), 0.0);
        assert_eq!(clamp_sqrt(4.0), 2.0);
    }
}
