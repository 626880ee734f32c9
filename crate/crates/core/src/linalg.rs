//! Factorise-once, solve-many wrappers around regularised Gram systems.

use faer::linalg::solvers::{Lblt, Llt, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone)]
enum Factor {
    Cholesky(Llt<f64>),
    Indefinite(Lblt<f64>),
}

/// Factorisation of `K + λI` for a symmetric `K`.
///
/// Cholesky is tried first. If it breaks down (possible when `λ` is tiny
/// relative to the round-off in `K`), a Bunch–Kaufman `LBLᵀ` factorisation
/// is used instead and a warning is logged.
#[derive(Debug, Clone)]
pub struct RegularisedSolver {
    factor: Factor,
    dim: usize,
}

impl RegularisedSolver {
    pub fn new(gram: MatRef<'_, f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return invalid(format!("regulariser must be positive, got {lambda}"));
        }
        let n = gram.nrows();
        if n == 0 || gram.ncols() != n {
            return invalid(format!("expected a non-empty square matrix, got {}x{}", n, gram.ncols()));
        }
        let mut a = gram.to_owned();
        for i in 0..n {
            a[(i, i)] += lambda;
        }
        let factor = match a.llt(Side::Lower) {
            Ok(llt) => Factor::Cholesky(llt),
            Err(_) => {
                log::warn!("Cholesky of regularised {n}x{n} Gram failed (lambda = {lambda:e}); using LBLT");
                Factor::Indefinite(a.lblt(Side::Lower))
            }
        };
        let solver = Self { factor, dim: n };
        // LBLT never reports failure itself, so probe it once.
        if let Factor::Indefinite(_) = solver.factor {
            let probe = solver.solve(Mat::<f64>::from_fn(n, 1, |_, _| 1.0).as_ref());
            if !probe.col(0).iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical("regularised Gram matrix is singular".into()));
            }
        }
        Ok(solver)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self.factor, Factor::Cholesky(_))
    }

    /// `(K + λI)⁻¹ B`.
    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        match &self.factor {
            Factor::Cholesky(f) => f.solve(rhs),
            Factor::Indefinite(f) => f.solve(rhs),
        }
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.solve(b.as_ref());
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    /// The dense inverse `(K + λI)⁻¹`, symmetrised. Used where the objective
    /// algebra needs `W` entrywise (small `m × m` systems).
    pub fn inverse(&self) -> Mat<f64> {
        let w = self.solve(Mat::<f64>::identity(self.dim, self.dim).as_ref());
        Mat::from_fn(self.dim, self.dim, |i, j| 0.5 * (w[(i, j)] + w[(j, i)]))
    }
}

/// `Σ_ij A_ij B_ij`.
pub(crate) fn frobenius_dot(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    debug_assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s
}
