//! Independent oracles shared by the integration tests: naive summation
//! definitions, a Gauss–Jordan inverse, central finite differences, and
//! adaptive Gauss–Kronrod quadrature.

#![allow(dead_code, clippy::needless_range_loop)]

use condcomp::{KernelPair, KernelSpec, Points};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, spread: f64) -> Points {
    let data = (0..n * d).map(|_| rng.random_range(-spread..spread)).collect();
    Points::new(data, n, d).unwrap()
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Points {
    Points::from_scalars(&(0..n).map(|_| rng.random_range(0..classes) as f64).collect::<Vec<_>>())
}

pub fn random_kernels(rng: &mut ChaCha8Rng) -> KernelPair {
    let mk = |rng: &mut ChaCha8Rng| {
        let alpha = rng.random_range(0.5..2.0);
        if rng.random_bool(0.5) {
            KernelSpec::gaussian(alpha).unwrap()
        } else {
            KernelSpec::inverse_multiquadric(alpha).unwrap()
        }
    };
    let feature = mk(rng);
    let response = mk(rng);
    KernelPair::new(feature, response)
}

pub fn k(spec: &KernelSpec, a: &[f64], b: &[f64]) -> f64 {
    spec.eval(a, b).unwrap()
}

/// Dense inverse by Gauss–Jordan elimination with partial pivoting.
pub fn inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// `(K_XX + λI)⁻¹` from scratch.
pub fn regularised_inverse(spec: &KernelSpec, x: &Points, lambda: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| k(spec, x.row(i), x.row(j)) + if i == j { lambda } else { 0.0 }).collect())
        .collect();
    inverse(&a)
}

/// `μ̂_{Y|X=x}(y)` by the double sum.
pub fn naive_embedding(kp: &KernelPair, xs: &Points, ys: &Points, w: &[Vec<f64>], x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            s += k(&kp.feature, x, xs.row(i)) * w[i][j] * k(&kp.response, ys.row(j), y);
        }
    }
    s
}

/// `⟨μ̂_a(x), μ̂_b(x)⟩` by the quadruple sum.
pub fn naive_embedding_inner(
    kp: &KernelPair,
    a: (&Points, &Points, &[Vec<f64>]),
    b: (&Points, &Points, &[Vec<f64>]),
    x: &[f64],
) -> f64 {
    let (xa, ya, wa) = a;
    let (xb, yb, wb) = b;
    let mut s = 0.0;
    for i in 0..xa.len() {
        for j in 0..xa.len() {
            let ci = k(&kp.feature, x, xa.row(i)) * wa[i][j];
            for p in 0..xb.len() {
                for q in 0..xb.len() {
                    let cp = k(&kp.feature, x, xb.row(p)) * wb[p][q];
                    s += ci * cp * k(&kp.response, ya.row(j), yb.row(q));
                }
            }
        }
    }
    s
}

pub fn naive_joint_sum(kp: &KernelPair, xa: &Points, ya: &Points, xb: &Points, yb: &Points) -> f64 {
    let mut s = 0.0;
    for i in 0..xa.len() {
        for j in 0..xb.len() {
            s += k(&kp.feature, xa.row(i), xb.row(j)) * k(&kp.response, ya.row(i), yb.row(j));
        }
    }
    s
}

pub fn naive_jmmd(kp: &KernelPair, xa: &Points, ya: &Points, xb: &Points, yb: &Points) -> f64 {
    let (n, m) = (xa.len() as f64, xb.len() as f64);
    naive_joint_sum(kp, xa, ya, xa, ya) / (n * n) - 2.0 * naive_joint_sum(kp, xa, ya, xb, yb) / (n * m)
        + naive_joint_sum(kp, xb, yb, xb, yb) / (m * m)
}

pub fn naive_jkip(kp: &KernelPair, x: &Points, y: &Points, sx: &Points, sy: &Points) -> f64 {
    let (n, m) = (x.len() as f64, sx.len() as f64);
    naive_joint_sum(kp, sx, sy, sx, sy) / (m * m) - 2.0 * naive_joint_sum(kp, sx, sy, x, y) / (m * n)
}

pub fn naive_jkh(kp: &KernelPair, x: &Points, y: &Points, cx: &Points, cy: &Points, cand: (&[f64], &[f64])) -> f64 {
    let (n, m) = (x.len() as f64, cx.len() as f64);
    let mut own = 0.0;
    for j in 0..cx.len() {
        own += k(&kp.feature, cand.0, cx.row(j)) * k(&kp.response, cand.1, cy.row(j));
    }
    let mut data = 0.0;
    for i in 0..x.len() {
        data += k(&kp.feature, cand.0, x.row(i)) * k(&kp.response, cand.1, y.row(i));
    }
    own / (m + 1.0) - data / n
}

/// `(1/n) Σ_i ‖μ̃(x_i)‖² − (2/n) Σ_i μ̃(x_i)(y_i)`, built from the embedding
/// of the compressed set.
pub fn naive_ackip(kp: &KernelPair, x: &Points, y: &Points, sx: &Points, sy: &Points, lambda: f64) -> f64 {
    let w = regularised_inverse(&kp.feature, sx, lambda);
    let n = x.len() as f64;
    let mut s = 0.0;
    for i in 0..x.len() {
        s += naive_embedding_inner(kp, (sx, sy, &w), (sx, sy, &w), x.row(i)) / n;
        s -= 2.0 * naive_embedding(kp, sx, sy, &w, x.row(i), y.row(i)) / n;
    }
    s
}

/// `(1/q) Σ_i ‖μ̂_a(x*_i) − μ̂_b(x*_i)‖²` by quadruple sums.
pub fn naive_amcmd_squared(
    kp: &KernelPair,
    weighting: &Points,
    a: (&Points, &Points, f64),
    b: (&Points, &Points, f64),
) -> f64 {
    let wa = regularised_inverse(&kp.feature, a.0, a.2);
    let wb = regularised_inverse(&kp.feature, b.0, b.2);
    let ea = (a.0, a.1, wa.as_slice());
    let eb = (b.0, b.1, wb.as_slice());
    let mut s = 0.0;
    for x in weighting.rows() {
        s += naive_embedding_inner(kp, ea, ea, x) - 2.0 * naive_embedding_inner(kp, ea, eb, x)
            + naive_embedding_inner(kp, eb, eb, x);
    }
    s / weighting.len() as f64
}

/// Central differences of `f` at every coordinate of `at`, step
/// `rel_h · (1 + |v|)`.
pub fn finite_difference(f: impl Fn(&Points) -> f64, at: &Points, rel_h: f64) -> Points {
    let mut out = Points::zeros(at.len(), at.dim());
    let mut work = at.clone();
    for i in 0..at.len() {
        for j in 0..at.dim() {
            let v = at.row(i)[j];
            let h = rel_h * (1.0 + v.abs());
            work.row_mut(i)[j] = v + h;
            let fp = f(&work);
            work.row_mut(i)[j] = v - h;
            let fm = f(&work);
            work.row_mut(i)[j] = v;
            out.row_mut(i)[j] = (fp - fm) / (2.0 * h);
        }
    }
    out
}

/// `‖a − b‖∞ / max(‖b‖∞, floor)`.
pub fn relative_error(a: &Points, b: &Points, floor: f64) -> f64 {
    let diff = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max).max(floor);
    diff / scale
}

// ---------------------------------------------------------------------------
// Adaptive Gauss–Kronrod (7, 15) quadrature.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_870_6, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (v, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&f, a, b, tol, 40)
}

/// `∫∫ f(x, y) dy dx` over a rectangle by nested adaptive quadrature.
pub fn integrate_2d(f: impl Fn(f64, f64) -> f64, x: (f64, f64), y: (f64, f64), tol: f64) -> f64 {
    let width = y.1 - y.0;
    integrate(|xv| integrate(|yv| f(xv, yv), y.0, y.1, tol / (10.0 * width.max(1.0))), x.0, x.1, tol)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}
