//! Numerical laboratory for knowledge distillation under teacher noise.
//!
//! * [`numkit`]: matrices, seeded random streams, least squares, Adam.
//! * [`models`]: linear, MLP, logistic and toy sequence models.
//! * [`distillation`]: target construction and student ensembles.
//! * [`bootstrap`]: teacher-model and ground-truth resampling.
//! * [`uncertainty`]: variance, entropy, dispersion and noise metrics.
//! * [`oracles`]: closed-form expectations used as ground truth.

// Index loops mirror the triangular-solve algebra, and `!(x > 0.0)` guards
// deliberately reject NaN along with out-of-range values.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod distillation;
pub mod error;
pub mod models;
pub mod numkit;
pub mod oracles;
pub mod uncertainty;

pub use error::{Error, Result};
