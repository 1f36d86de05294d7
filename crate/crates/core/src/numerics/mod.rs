//! Dense linear algebra, spectral routines and the seeded random source.
//!
//! Everything here is 64-bit floating point. Matrices are stored row-major.
//! Large products go through `matrixmultiply`'s dgemm kernel, which is
//! single-threaded and deterministic, so results are bit-reproducible.

mod eigen;
mod matrix;
mod rng;
mod vector;

pub use eigen::{power_iteration_sigma_max, sym_eig, sym_eig_with_vectors, SymEigen};
pub use matrix::{gemm, matvec, Matrix, Transpose};
pub use rng::{derive_seed, gaussian_vector, Rng};
pub use vector::Vector;

/// Default iteration count for [`power_iteration_sigma_max`].
pub const DEFAULT_POWER_ITERS: usize = 500;
