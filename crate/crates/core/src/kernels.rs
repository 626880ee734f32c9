//! Scalar kernels on feature and response spaces.
//!
//! The two differentiable families are radial: they depend on the points only
//! through `r² = ‖a − b‖²`, so each is described by its profile `φ(r²)` and
//! the profile derivative. The gradient in the first argument is then
//! `∇_a k(a, b) = 2 φ'(r²) (a − b)`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::points::{squared_distance, Points};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    InverseMultiquadric,
    Indicator,
}

/// Kernel family plus lengthscale. The lengthscale is ignored for
/// [`KernelFamily::Indicator`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscale: f64,
}

/// Feature kernel `k` and response kernel `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPair {
    pub feature: KernelSpec,
    pub response: KernelSpec,
}

impl KernelPair {
    pub fn new(feature: KernelSpec, response: KernelSpec) -> Self {
        Self { feature, response }
    }

    /// Product kernel `k(x, x') l(y, y')`.
    #[inline]
    pub fn joint(&self, x: &[f64], y: &[f64], x2: &[f64], y2: &[f64]) -> f64 {
        self.feature.value(x, x2) * self.response.value(y, y2)
    }
}

fn is_integer(v: f64) -> bool {
    v.is_finite() && v.fract() == 0.0
}

impl KernelSpec {
    pub fn gaussian(lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, lengthscale)
    }

    pub fn inverse_multiquadric(lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::InverseMultiquadric, lengthscale)
    }

    pub fn indicator() -> Self {
        Self { family: KernelFamily::Indicator, lengthscale: 1.0 }
    }

    pub fn new(family: KernelFamily, lengthscale: f64) -> Result<Self> {
        let spec = Self { family, lengthscale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::Indicator => Ok(()),
            _ if self.lengthscale > 0.0 && self.lengthscale.is_finite() => Ok(()),
            _ => invalid(format!("lengthscale must be positive, got {}", self.lengthscale)),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self.family, KernelFamily::Indicator)
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self.family, KernelFamily::Indicator)
    }

    /// Checks that every coordinate of `points` is a valid argument for this
    /// kernel (integers for the indicator kernel).
    pub fn check_points(&self, points: &Points) -> Result<()> {
        if !points.is_finite() {
            return invalid("points contain non-finite values");
        }
        if self.is_indicator() && !points.as_slice().iter().all(|&v| is_integer(v)) {
            return invalid("indicator kernel requires integer labels");
        }
        Ok(())
    }

    /// `k(a, b)` with argument validation.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return invalid(format!("dimension mismatch: {} vs {}", a.len(), b.len()));
        }
        if self.is_indicator() && !(a.iter().chain(b).all(|&v| is_integer(v))) {
            return invalid("indicator kernel requires integer labels");
        }
        Ok(self.value(a, b))
    }

    /// `k(a, b)` without validation. Callers guarantee equal dimensions.
    #[inline]
    pub fn value(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Indicator => {
                if a == b {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.profile(squared_distance(a, b)).0,
        }
    }

    /// Profile `φ(r²)` and its derivative `dφ/d(r²)`.
    #[inline]
    fn profile(&self, r2: f64) -> (f64, f64) {
        let a2 = self.lengthscale * self.lengthscale;
        match self.family {
            KernelFamily::Gaussian => {
                let k = (-r2 / (2.0 * a2)).exp();
                (k, -k / (2.0 * a2))
            }
            KernelFamily::InverseMultiquadric => {
                let base = 1.0 + r2 / a2;
                let k = 1.0 / base.sqrt();
                (k, -0.5 * k / base / a2)
            }
            KernelFamily::Indicator => unreachable!("indicator kernel has no radial profile"),
        }
    }

    /// `∇_a k(a, b)`.
    pub fn grad_first_arg(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        if !self.is_differentiable() {
            return Err(Error::Unsupported("indicator kernel is not differentiable".into()));
        }
        if a.len() != b.len() {
            return invalid(format!("dimension mismatch: {} vs {}", a.len(), b.len()));
        }
        let mut out = vec![0.0; a.len()];
        self.accumulate_grad(a, b, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale · ∇_a k(a, b)`; returns `k(a, b)`.
    #[inline]
    pub(crate) fn accumulate_grad(&self, a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) -> f64 {
        let (k, dk) = self.profile(squared_distance(a, b));
        let c = 2.0 * dk * scale;
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o += c * (x - y);
        }
        k
    }
}

/// Dense Gram matrix `values[i][j] = k(rows[i], cols[j])`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub values: Mat<f64>,
}

impl GramMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }
}

pub fn gram(spec: &KernelSpec, rows: &Points, cols: &Points) -> Result<GramMatrix> {
    if rows.is_empty() || cols.is_empty() {
        return invalid("gram matrix of an empty point set");
    }
    if rows.dim() != cols.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", rows.dim(), cols.dim()));
    }
    spec.check_points(rows)?;
    spec.check_points(cols)?;
    Ok(GramMatrix { values: gram_matrix(spec, rows, cols) })
}

/// Unchecked Gram construction for internal use; empty inputs give an empty
/// matrix.
pub(crate) fn gram_matrix(spec: &KernelSpec, rows: &Points, cols: &Points) -> Mat<f64> {
    Mat::from_fn(rows.len(), cols.len(), |i, j| spec.value(rows.row(i), cols.row(j)))
}

/// Symmetric Gram matrix on one point set, evaluated on the upper triangle
/// only so the result is exactly symmetric.
pub(crate) fn gram_symmetric(spec: &KernelSpec, points: &Points) -> Mat<f64> {
    let n = points.len();
    let mut out = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = spec.value(points.row(i), points.row(j));
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Median-heuristic lengthscale `α = sqrt(H / 2)`, where `H` is the median
/// of pairwise squared distances. Pairs are `i < j` unless
/// `include_diagonal` is set, in which case the `n` zero self-distances are
/// included as well.
pub fn median_heuristic(points: &Points, include_diagonal: bool) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return invalid("median heuristic needs at least two points");
    }
    let pairs = n * (n - 1) / 2 + if include_diagonal { n } else { 0 };
    let mut d2 = Vec::with_capacity(pairs);
    for i in 0..n {
        if include_diagonal {
            d2.push(0.0);
        }
        for j in i + 1..n {
            d2.push(squared_distance(points.row(i), points.row(j)));
        }
    }
    let h = median_in_place(&mut d2);
    if !(h > 0.0) {
        return Err(Error::DegenerateLengthscale(format!(
            "median squared distance is {h}; supply the lengthscale explicitly"
        )));
    }
    Ok((h / 2.0).sqrt())
}

/// Median with the even-length convention of averaging the two middle values.
pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    let len = values.len();
    assert!(len > 0);
    let mid = len / 2;
    let (lower, upper_mid, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper_mid;
    if len % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max + upper)
    }
}
