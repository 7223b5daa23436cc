//! Deterministic numerical substrate shared by every other module.

mod adam;
mod gradcheck;
mod linalg;
mod matrix;
mod rng;

pub use adam::{adam_optimize, Adam, AdamConfig};
pub use gradcheck::{finite_diff_grad, max_abs_diff};
pub use linalg::{solve_least_squares, Cholesky, LeastSquares, RANK_TOLERANCE};
pub use matrix::{dot, mean, norm, sample_variance, Matrix};
pub use rng::{gaussian_matrix, mix_seed, splitmix64, RngStream};
