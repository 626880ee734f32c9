//! Row-major point sets.
//!
//! Kernels are evaluated on rows, so point sets are stored contiguously per
//! row rather than in the column-major layout used by the dense solvers.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A set of `len` points in `dim` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    data: Vec<f64>,
    len: usize,
    dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, len: usize, dim: usize) -> Result<Self> {
        if data.len() != len * dim {
            return invalid(format!("point buffer has {} values, expected {len}x{dim}", data.len()));
        }
        Ok(Self { data, len, dim })
    }

    /// An empty set of points with the given dimension.
    pub fn empty(dim: usize) -> Self {
        Self { data: Vec::new(), len: 0, dim }
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Self { data: vec![0.0; len * dim], len, dim }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return invalid(format!("row {i} has dimension {}, expected {dim}", r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, len: rows.len(), dim })
    }

    /// One-dimensional points from a slice of scalars.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self { data: values.to_vec(), len: values.len(), dim: 1 }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows picked by index, in the given order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { data, len: indices.len(), dim: self.dim }
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return invalid(format!("pushed row has dimension {}, expected {}", row.len(), self.dim));
        }
        self.data.extend_from_slice(row);
        self.len += 1;
        Ok(())
    }

    /// Copy with `row` appended.
    pub fn with_row(&self, row: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.push(row)?;
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len).map(|i| self.data[i * self.dim + j]).collect()
    }

    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.len, self.dim, |i, j| self.data[i * self.dim + j])
    }

    pub fn from_mat(m: &Mat<f64>) -> Self {
        let (len, dim) = (m.nrows(), m.ncols());
        let mut data = Vec::with_capacity(len * dim);
        for i in 0..len {
            for j in 0..dim {
                data.push(m[(i, j)]);
            }
        }
        Self { data, len, dim }
    }
}

/// Borrowed view of a labelled sample: feature row `i` pairs with response
/// row `i`.
#[derive(Debug, Clone, Copy)]
pub struct Pairs<'a> {
    pub features: &'a Points,
    pub responses: &'a Points,
}

impl<'a> Pairs<'a> {
    pub fn new(features: &'a Points, responses: &'a Points) -> Result<Self> {
        if features.len() != responses.len() {
            return invalid(format!("{} feature rows but {} response rows", features.len(), responses.len()));
        }
        Ok(Self { features, responses })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
