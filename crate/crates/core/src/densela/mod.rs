//! Dense linear algebra kernel: row-major `f64` matrices, the handful of
//! products and norms the adapters need, an LU solver, and the seeded
//! random stream every other module draws from.

mod matrix;
mod rng;
mod text;

pub use matrix::{banded_mask, column_norms, frobenius_norm, matmul, random_matrix, Matrix};
pub use rng::RngStream;
