//! Compression of labelled datasets that preserves joint or conditional
//! distributions, measured through kernel mean embeddings.

// `!(v > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod compressors;
pub mod data;
pub mod discrepancies;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod linalg;
pub mod objectives;
pub mod optim;
pub mod points;
pub mod rng;

pub use compressors::{compress, CompressedSet, CompressionConfig, Method};
pub use error::{Error, Result};
pub use kernels::{gram, median_heuristic, GramMatrix, KernelFamily, KernelPair, KernelSpec};
pub use optim::Optimiser;
pub use points::{Pairs, Points};
