mod common;

use common::*;
use condcomp::analytic::*;
use condcomp::embeddings::KcmeModel;
use condcomp::{Pairs, Points};
use rand::Rng;

fn random_scenario(r: &mut rand_chacha::ChaCha8Rng) -> AnalyticScenario {
    AnalyticScenario {
        mu: r.random_range(-1.5..1.5),
        sigma2: r.random_range(0.3..2.0),
        a0: r.random_range(-1.0..1.0),
        a1: r.random_range(-1.0..1.0),
        sigma_eps2: r.random_range(0.1..1.5),
        alpha_k: r.random_range(0.5..2.0),
        alpha_l: r.random_range(0.5..2.0),
    }
}

fn gauss_k(a: f64, b: f64, alpha: f64) -> f64 {
    (-(a - b) * (a - b) / (2.0 * alpha * alpha)).exp()
}

fn quad_marginal(s: &AnalyticScenario, x1: f64, x2: f64) -> f64 {
    let sd = s.sigma2.sqrt();
    integrate(
        |x| normal_pdf(x, s.mu, s.sigma2) * gauss_k(x, x1, s.alpha_k) * gauss_k(x, x2, s.alpha_k),
        s.mu - 8.0 * sd,
        s.mu + 8.0 * sd,
        1e-12,
    )
}

fn quad_joint(s: &AnalyticScenario, x1: f64, y1: f64) -> f64 {
    let (sd, se) = (s.sigma2.sqrt(), s.sigma_eps2.sqrt());
    integrate(
        |x| {
            let m = s.a0 + s.a1 * x;
            let inner = integrate(
                |y| normal_pdf(y, m, s.sigma_eps2) * gauss_k(y, y1, s.alpha_l),
                m - 8.0 * se,
                m + 8.0 * se,
                1e-13,
            );
            normal_pdf(x, s.mu, s.sigma2) * gauss_k(x, x1, s.alpha_k) * inner
        },
        s.mu - 8.0 * sd,
        s.mu + 8.0 * sd,
        1e-12,
    )
}

fn quad_norm(s: &AnalyticScenario) -> f64 {
    let se = s.sigma_eps2.sqrt();
    integrate(
        |y| {
            let inner = integrate(
                |y2| normal_pdf(y2, 0.0, s.sigma_eps2) * gauss_k(y, y2, s.alpha_l),
                -8.0 * se,
                8.0 * se,
                1e-13,
            );
            normal_pdf(y, 0.0, s.sigma_eps2) * inner
        },
        -8.0 * se,
        8.0 * se,
        1e-12,
    )
}

#[test]
fn marginal_expectation_matches_quadrature_at_the_origin() {
    let s = AnalyticScenario { mu: 0.0, sigma2: 1.0, alpha_k: 1.0, ..Default::default() };
    let v = marginal_double_kernel_expectation(&s, 0.0, 0.0);
    assert!((v - quad_marginal(&s, 0.0, 0.0)).abs() < 1e-8);
    // ∫ e^{−x²} N(x; 0, 1) dx = 1/√3.
    assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-14);
}

#[test]
fn joint_expectation_matches_quadrature_at_the_reference_scenario() {
    let s = AnalyticScenario::default();
    let v = joint_kernel_expectation(&s, 0.0, 0.0);
    assert!((v - quad_joint(&s, 0.0, 0.0)).abs() < 1e-7, "{v}");
}

#[test]
fn closed_forms_match_quadrature_across_a_parameter_sweep() {
    let mut r = rng(42);
    for _ in 0..10 {
        let s = random_scenario(&mut r);
        let (x1, x2, y1) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let m = marginal_double_kernel_expectation(&s, x1, x2);
        assert!((m - quad_marginal(&s, x1, x2)).abs() < 1e-7, "{s:?}");
        assert!((m - marginal_double_kernel_expectation(&s, x2, x1)).abs() < 1e-15);
        assert!(m > 0.0 && m <= 1.0);
        let j = joint_kernel_expectation(&s, x1, y1);
        assert!((j - quad_joint(&s, x1, y1)).abs() < 1e-7, "{s:?}");
        assert!(j > 0.0 && j <= 1.0);
        let e = exact_embedding_norm_expectation(&s);
        assert!((e - quad_norm(&s)).abs() < 1e-7, "{s:?}");
    }
}

#[test]
fn norm_expectation_at_unit_parameters() {
    let s = AnalyticScenario { sigma_eps2: 1.0, alpha_l: 1.0, ..Default::default() };
    let e = exact_embedding_norm_expectation(&s);
    assert!((e - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!((e - quad_norm(&s)).abs() < 1e-9);
    let moved = AnalyticScenario { mu: -3.0, a0: 4.0, a1: -2.0, ..s };
    assert_eq!(exact_embedding_norm_expectation(&moved), e);
}

#[test]
fn joint_expectation_decays_away_from_the_mean() {
    let s = AnalyticScenario::default();
    let y1 = s.conditional_mean(s.mu);
    let v: Vec<f64> = [0.0, 1.0, 2.0, 3.0].iter().map(|d| joint_kernel_expectation(&s, s.mu + d, y1)).collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
}

/// `‖μ(x) − μ̃(x)‖²` at one x with the y-integrals done exactly.
struct PointwiseGap {
    s: AnalyticScenario,
    x: Vec<f64>,
    y: Vec<f64>,
    w: faer::Mat<f64>,
    ly: Vec<Vec<f64>>,
}

impl PointwiseGap {
    fn new(s: &AnalyticScenario, x: &Points, y: &Points, lambda: f64) -> Self {
        let model = KcmeModel::fit(x, y, s.kernels().unwrap(), lambda).unwrap();
        let m = x.len();
        let ly = (0..m).map(|j| (0..m).map(|q| gauss_k(y.row(j)[0], y.row(q)[0], s.alpha_l)).collect()).collect();
        Self { s: *s, x: x.as_slice().to_vec(), y: y.as_slice().to_vec(), w: model.weight_matrix(), ly }
    }

    fn at(&self, xv: f64) -> f64 {
        let s = &self.s;
        let m = self.x.len();
        let v = s.alpha_l * s.alpha_l + s.sigma_eps2;
        let kx: Vec<f64> = self.x.iter().map(|&xi| gauss_k(xv, xi, s.alpha_k)).collect();
        let beta: Vec<f64> = (0..m).map(|j| (0..m).map(|i| kx[i] * self.w[(i, j)]).sum()).collect();
        let mean = s.conditional_mean(xv);
        let cross: f64 = (0..m)
            .map(|j| beta[j] * (s.alpha_l * s.alpha_l / v).sqrt() * (-(mean - self.y[j]).powi(2) / (2.0 * v)).exp())
            .sum();
        let quad: f64 = (0..m).map(|j| (0..m).map(|q| beta[j] * self.ly[j][q] * beta[q]).sum::<f64>()).sum();
        exact_embedding_norm_expectation(s) - 2.0 * cross + quad
    }
}

#[test]
fn exact_amcmd_agrees_with_monte_carlo_and_quadrature() {
    let s = AnalyticScenario::default();
    for (seed, lambda) in [(1u64, 0.01), (2, 0.1), (3, 1.0)] {
        let set = sample_scenario(&s, 15, seed).unwrap();
        let exact = exact_amcmd_squared(&s, set.pairs(), lambda).unwrap();
        let gap = PointwiseGap::new(&s, &set.features, &set.responses, lambda);

        let mut r = rng(seed + 10);
        let draws = 100_000;
        let samples: Vec<f64> = (0..draws)
            .map(|_| gap.at(s.mu + s.sigma2.sqrt() * r.sample::<f64, _>(rand_distr::StandardNormal)))
            .collect();
        let mc = samples.iter().sum::<f64>() / draws as f64;
        let se = (samples.iter().map(|v| (v - mc).powi(2)).sum::<f64>() / (draws as f64 * (draws - 1) as f64)).sqrt();
        assert!((exact - mc).abs() < 4.0 * se, "exact {exact} vs MC {mc} ± {se}");
        assert!(se < 0.01 * exact, "MC too noisy: {se}");

        let sd = s.sigma2.sqrt();
        let quad = integrate(|x| normal_pdf(x, s.mu, s.sigma2) * gap.at(x), s.mu - 8.0 * sd, s.mu + 8.0 * sd, 1e-11);
        assert!((exact - quad).abs() < 1e-8, "exact {exact} vs quadrature {quad}");
    }
}

#[test]
fn exact_amcmd_is_non_negative_for_arbitrary_sets() {
    let mut r = rng(9);
    for _ in 0..20 {
        let s = random_scenario(&mut r);
        let m = r.random_range(1..12);
        let x = random_points(&mut r, m, 1, 3.0);
        let y = random_points(&mut r, m, 1, 3.0);
        let lambda = 10f64.powf(r.random_range(-4.0..0.0));
        let v = exact_amcmd_squared(&s, Pairs::new(&x, &y).unwrap(), lambda).unwrap();
        assert!(v >= -1e-9, "{v}");
    }
}

#[test]
fn exact_amcmd_shrinks_with_more_true_samples() {
    let s = AnalyticScenario::default();
    let median_at = |m: usize| {
        let mut v: Vec<f64> = (0..5)
            .map(|seed| {
                let set = sample_scenario(&s, m, 50 + seed).unwrap();
                exact_amcmd_squared(&s, set.pairs(), 1e-3).unwrap()
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v[2]
    };
    let (a, b, c) = (median_at(50), median_at(200), median_at(800));
    assert!(a > b && b > c, "{a} {b} {c}");
    assert!(c < 0.01, "{c}");
}

#[test]
fn invalid_regulariser_is_rejected() {
    let s = AnalyticScenario::default();
    let x = Points::from_scalars(&[0.0]);
    assert!(exact_amcmd_squared(&s, Pairs::new(&x, &x).unwrap(), 0.0).is_err());
    assert!(exact_amcmd_squared(&s, Pairs::new(&x, &x).unwrap(), f64::NAN).is_err());
}

#[test]
fn sampling_moments_and_determinism() {
    let s = AnalyticScenario::default();
    let n = 10_000;
    let d = sample_scenario(&s, n, 3).unwrap();
    let x = d.features.as_slice();
    let y = d.responses.as_slice();
    let mean_x = x.iter().sum::<f64>() / n as f64;
    assert!((mean_x - s.mu).abs() < 4.0 * (s.sigma2 / n as f64).sqrt());
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mean_x).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mean_x) * (b - mean_y)).sum();
    let slope = sxy / sxx;
    assert!((slope - s.a1).abs() < 4.0 * (s.sigma_eps2 / sxx).sqrt(), "{slope}");
    assert_eq!(sample_scenario(&s, 50, 3).unwrap(), sample_scenario(&s, 50, 3).unwrap());
    assert!(sample_scenario(&s, 0, 3).is_err());
}
