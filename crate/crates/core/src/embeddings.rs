//! Empirical joint and conditional kernel mean embeddings.
//!
//! The conditional embedding at `x` is `Σ_ij k(x_i, ·) W_ij l(y_j, ·)` with
//! `W = (K_XX + λI)⁻¹`. `W` is never formed explicitly; the model keeps a
//! factorisation of `K_XX + λI` and solves against it.

use faer::Mat;

use crate::error::{invalid, Result};
use crate::kernels::{gram_matrix, gram_symmetric, KernelPair, KernelSpec};
use crate::linalg::{frobenius_dot, RegularisedSolver};
use crate::points::{Pairs, Points};

/// Kernel conditional mean embedding fitted on `n` training pairs.
#[derive(Debug, Clone)]
pub struct KcmeModel {
    features: Points,
    responses: Points,
    kernels: KernelPair,
    lambda: f64,
    solver: RegularisedSolver,
}

impl KcmeModel {
    pub fn fit(features: &Points, responses: &Points, kernels: KernelPair, lambda: f64) -> Result<Self> {
        let pairs = Pairs::new(features, responses)?;
        if pairs.is_empty() {
            return invalid("cannot fit a conditional embedding on zero pairs");
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return invalid(format!("regulariser must be positive, got {lambda}"));
        }
        kernels.feature.validate()?;
        kernels.response.validate()?;
        kernels.feature.check_points(features)?;
        kernels.response.check_points(responses)?;
        let k = gram_symmetric(&kernels.feature, features);
        let solver = RegularisedSolver::new(k.as_ref(), lambda)?;
        Ok(Self { features: features.clone(), responses: responses.clone(), kernels, lambda, solver })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &Points {
        &self.features
    }

    pub fn responses(&self) -> &Points {
        &self.responses
    }

    pub fn kernels(&self) -> &KernelPair {
        &self.kernels
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn solver(&self) -> &RegularisedSolver {
        &self.solver
    }

    /// Dense `W = (K + λI)⁻¹`. Intended for small models and tests.
    pub fn weight_matrix(&self) -> Mat<f64> {
        self.solver.inverse()
    }

    fn check_query_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.features.dim() {
            return invalid(format!("query has dimension {}, model expects {}", x.len(), self.features.dim()));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return invalid("query contains non-finite values");
        }
        Ok(())
    }

    /// Coefficients `β(x) = W k_x` such that the embedding at `x` is
    /// `Σ_j β_j(x) l(y_j, ·)`.
    pub fn coefficients(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_query_x(x)?;
        let kx: Vec<f64> = self.features.rows().map(|xi| self.kernels.feature.value(x, xi)).collect();
        Ok(self.solver.solve_vec(&kx))
    }

    /// Estimate of `E[h(Y) | X = x]` given `h_values[j] = h(y_j)`.
    pub fn predict_function(&self, x: &[f64], h_values: &[f64]) -> Result<f64> {
        if h_values.len() != self.len() {
            return invalid(format!("expected {} h values, got {}", self.len(), h_values.len()));
        }
        let beta = self.coefficients(x)?;
        Ok(beta.iter().zip(h_values).map(|(b, h)| b * h).sum())
    }

    /// Batched predictions: entry `(i, c)` estimates `E[h_c(Y) | X = queries[i]]`
    /// where column `c` of `h_values` holds `h_c(y_j)`.
    pub fn predict_many(&self, queries: &Points, h_values: &Mat<f64>) -> Result<Mat<f64>> {
        if h_values.nrows() != self.len() {
            return invalid(format!("expected {} rows of h values, got {}", self.len(), h_values.nrows()));
        }
        if queries.dim() != self.features.dim() {
            return invalid("query dimension does not match the model");
        }
        let a = self.solver.solve(h_values.as_ref());
        let kq = gram_matrix(&self.kernels.feature, queries, &self.features);
        Ok(&kq * &a)
    }

    /// `μ̂_{Y|X=x}(y) = k_xᵀ W l_y`.
    pub fn embedding_eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.kernels.response.eval(y, self.responses.row(0))?;
        let ly: Vec<f64> = self.responses.rows().map(|yj| self.kernels.response.value(y, yj)).collect();
        self.predict_function(x, &ly)
    }
}

/// `‖μ̂_a(x) − μ̂_b(x)‖` in the response RKHS.
pub fn mcmd_at(model_a: &KcmeModel, model_b: &KcmeModel, x: &[f64]) -> Result<f64> {
    let l = check_compatible(model_a, model_b)?;
    let alpha = model_a.coefficients(x)?;
    let beta = model_b.coefficients(x)?;
    let laa = gram_symmetric(&l, &model_a.responses);
    let lbb = gram_symmetric(&l, &model_b.responses);
    let lab = gram_matrix(&l, &model_a.responses, &model_b.responses);
    let quad = |m: &Mat<f64>, u: &[f64], v: &[f64]| -> f64 {
        let mut s = 0.0;
        for (i, ui) in u.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                s += ui * m[(i, j)] * vj;
            }
        }
        s
    };
    let sq = quad(&laa, &alpha, &alpha) - 2.0 * quad(&lab, &alpha, &beta) + quad(&lbb, &beta, &beta);
    Ok(sq.max(0.0).sqrt())
}

pub(crate) fn check_compatible(model_a: &KcmeModel, model_b: &KcmeModel) -> Result<KernelSpec> {
    if model_a.kernels.response != model_b.kernels.response {
        return invalid("models use different response kernels");
    }
    if model_a.responses.dim() != model_b.responses.dim() || model_a.features.dim() != model_b.features.dim() {
        return invalid("models live on different spaces");
    }
    Ok(model_a.kernels.response)
}

/// Empirical joint embedding `(1/n) Σ_i k(x_i, ·) l(y_i, ·)`.
#[derive(Debug, Clone)]
pub struct JointEmbeddingModel {
    features: Points,
    responses: Points,
    kernels: KernelPair,
}

impl JointEmbeddingModel {
    pub fn new(features: &Points, responses: &Points, kernels: KernelPair) -> Result<Self> {
        let pairs = Pairs::new(features, responses)?;
        if pairs.is_empty() {
            return invalid("joint embedding of zero pairs");
        }
        kernels.feature.check_points(features)?;
        kernels.response.check_points(responses)?;
        Ok(Self { features: features.clone(), responses: responses.clone(), kernels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.features.dim() || y.len() != self.responses.dim() {
            return invalid("query dimension does not match the embedding");
        }
        let s: f64 =
            self.features.rows().zip(self.responses.rows()).map(|(xi, yi)| self.kernels.joint(x, y, xi, yi)).sum();
        Ok(s / self.len() as f64)
    }

    /// `⟨μ̂_self, μ̂_other⟩` in the tensor-product RKHS.
    pub fn inner(&self, other: &JointEmbeddingModel) -> f64 {
        let k = gram_matrix(&self.kernels.feature, &self.features, &other.features);
        let l = gram_matrix(&self.kernels.response, &self.responses, &other.responses);
        frobenius_dot(k.as_ref(), l.as_ref()) / (self.len() * other.len()) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussians(a: f64, b: f64) -> KernelPair {
        KernelPair::new(KernelSpec::gaussian(a).unwrap(), KernelSpec::gaussian(b).unwrap())
    }

    fn random_points(n: usize, d: usize, seed: u64) -> Points {
        let mut rng = stream(seed, "test");
        let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        Points::new(data, n, d).unwrap()
    }

    #[test]
    fn single_pair_model() {
        let x = Points::from_scalars(&[0.3]);
        let y = Points::from_scalars(&[-1.0]);
        let m = KcmeModel::fit(&x, &y, gaussians(1.0, 1.0), 0.1).unwrap();
        assert!((m.weight_matrix()[(0, 0)] - 1.0 / 1.1).abs() < 1e-14);
        assert!((m.predict_function(&[0.3], &[1.0]).unwrap() - 1.0 / 1.1).abs() < 1e-14);
        assert!((m.embedding_eval(&[0.3], &[-1.0]).unwrap() - 1.0 / 1.1).abs() < 1e-14);
        assert_eq!(m.predict_function(&[0.3], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn fit_validation() {
        let x = Points::from_scalars(&[0.3]);
        let y = Points::from_scalars(&[1.0]);
        assert!(KcmeModel::fit(&x, &y, gaussians(1.0, 1.0), 0.0).is_err());
        let bad = Points::from_scalars(&[f64::NAN]);
        assert!(KcmeModel::fit(&bad, &y, gaussians(1.0, 1.0), 0.1).is_err());
        let y2 = Points::from_scalars(&[1.0, 2.0]);
        assert!(KcmeModel::fit(&x, &y2, gaussians(1.0, 1.0), 0.1).is_err());
    }

    #[test]
    fn duplicate_features_are_solvable() {
        let x = Points::from_scalars(&[1.0, 1.0]);
        let y = Points::from_scalars(&[0.0, 1.0]);
        let m = KcmeModel::fit(&x, &y, gaussians(1.0, 1.0), 0.01).unwrap();
        let w = m.weight_matrix();
        // (K + λI) W = I with K all ones.
        for i in 0..2 {
            for j in 0..2 {
                let v = (w[(0, j)] + w[(1, j)]) + 0.01 * w[(i, j)];
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn weight_matrix_inverts_regularised_gram() {
        let x = random_points(3, 2, 1);
        let y = random_points(3, 1, 2);
        let kp = gaussians(0.8, 1.0);
        let m = KcmeModel::fit(&x, &y, kp, 0.05).unwrap();
        let w = m.weight_matrix();
        let mut k = gram_matrix(&kp.feature, &x, &x);
        for i in 0..3 {
            k[(i, i)] += 0.05;
        }
        let prod = &w * &k;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn predictions_match_double_sum() {
        let x = random_points(3, 2, 3);
        let y = random_points(3, 1, 4);
        let kp = gaussians(1.2, 0.7);
        let m = KcmeModel::fit(&x, &y, kp, 0.1).unwrap();
        let w = m.weight_matrix();
        let q = [0.2, -0.4];
        let yq = [0.5];
        let mut brute = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                brute += kp.feature.value(&q, x.row(i)) * w[(i, j)] * kp.response.value(&yq, y.row(j));
            }
        }
        assert!((m.embedding_eval(&q, &yq).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn predict_many_matches_single() {
        let x = random_points(6, 1, 5);
        let y = random_points(6, 1, 6);
        let m = KcmeModel::fit(&x, &y, gaussians(1.0, 1.0), 0.1).unwrap();
        let q = random_points(4, 1, 7);
        let h = Mat::from_fn(6, 2, |j, c| if c == 0 { y.row(j)[0] } else { y.row(j)[0].sin() });
        let batch = m.predict_many(&q, &h).unwrap();
        for i in 0..4 {
            for c in 0..2 {
                let hv: Vec<f64> = (0..6).map(|j| h[(j, c)]).collect();
                let single = m.predict_function(q.row(i), &hv).unwrap();
                assert!((batch[(i, c)] - single).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indicator_unseen_label_scores_zero() {
        let x = random_points(3, 1, 8);
        let y = Points::from_scalars(&[0.0, 1.0, 1.0]);
        let kp = KernelPair::new(KernelSpec::gaussian(1.0).unwrap(), KernelSpec::indicator());
        let m = KcmeModel::fit(&x, &y, kp, 0.1).unwrap();
        assert_eq!(m.embedding_eval(&[0.0], &[5.0]).unwrap(), 0.0);
        assert!(m.embedding_eval(&[0.0], &[0.5]).is_err());
    }

    #[test]
    fn predictions_shrink_with_lambda() {
        let x = random_points(5, 1, 9);
        let y = random_points(5, 1, 10);
        let h: Vec<f64> = y.rows().map(|r| r[0]).collect();
        let small = KcmeModel::fit(&x, &y, gaussians(1.0, 1.0), 1.0).unwrap();
        let large = KcmeModel::fit(&x, &y, gaussians(1.0, 1.0), 10.0).unwrap();
        for q in [-1.0, 0.0, 0.7] {
            let a = small.predict_function(&[q], &h).unwrap().abs();
            let b = large.predict_function(&[q], &h).unwrap().abs();
            assert!(b < a, "{b} !< {a}");
        }
    }

    #[test]
    fn mcmd_basic_properties() {
        let kp = gaussians(1.0, 1.0);
        let xa = random_points(2, 1, 11);
        let ya = random_points(2, 1, 12);
        let xb = random_points(2, 1, 13);
        let yb = random_points(2, 1, 14);
        let a = KcmeModel::fit(&xa, &ya, kp, 0.1).unwrap();
        let b = KcmeModel::fit(&xb, &yb, kp, 0.2).unwrap();
        assert_eq!(mcmd_at(&a, &a, &[0.1]).unwrap(), 0.0);
        let ab = mcmd_at(&a, &b, &[0.1]).unwrap();
        let ba = mcmd_at(&b, &a, &[0.1]).unwrap();
        assert!((ab - ba).abs() < 1e-14);

        // Quadruple-sum expansion of ⟨μa − μb, μa − μb⟩.
        let (wa, wb) = (a.weight_matrix(), b.weight_matrix());
        let q = [0.1];
        let coef = |w: &Mat<f64>, x: &Points, j: usize| -> f64 {
            (0..2).map(|i| kp.feature.value(&q, x.row(i)) * w[(i, j)]).sum()
        };
        let mut brute = 0.0;
        for j in 0..2 {
            for l in 0..2 {
                brute += coef(&wa, &xa, j) * coef(&wa, &xa, l) * kp.response.value(ya.row(j), ya.row(l));
                brute -= 2.0 * coef(&wa, &xa, j) * coef(&wb, &xb, l) * kp.response.value(ya.row(j), yb.row(l));
                brute += coef(&wb, &xb, j) * coef(&wb, &xb, l) * kp.response.value(yb.row(j), yb.row(l));
            }
        }
        assert!((ab * ab - brute).abs() < 1e-10);
    }

    #[test]
    fn mcmd_rejects_mismatched_kernels() {
        let x = Points::from_scalars(&[0.0]);
        let y = Points::from_scalars(&[0.0]);
        let a = KcmeModel::fit(&x, &y, gaussians(1.0, 1.0), 0.1).unwrap();
        let b = KcmeModel::fit(&x, &y, gaussians(1.0, 2.0), 0.1).unwrap();
        assert!(mcmd_at(&a, &b, &[0.0]).is_err());
    }

    #[test]
    fn joint_embedding_eval() {
        let x = Points::from_scalars(&[0.0, 1.0]);
        let y = Points::from_scalars(&[0.0, 1.0]);
        let j = JointEmbeddingModel::new(&x, &y, gaussians(1.0, 1.0)).unwrap();
        let expected = 0.5 * (1.0 + (-1.0f64).exp());
        assert!((j.eval(&[0.0], &[0.0]).unwrap() - expected).abs() < 1e-15);
    }
}
