use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::error::{Error, Result};
use crate::numkit::{solve_least_squares, Matrix};

/// `f(x) = xᵀθ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub theta: Vec<f64>,
}

impl LinearModel {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    /// Ordinary least-squares fit.
    pub fn fit(x: &Matrix, y: &[f64]) -> Result<Self> {
        Ok(Self::new(solve_least_squares(x, y)?))
    }
}

impl Regressor for LinearModel {
    fn input_dim(&self) -> usize {
        self.theta.len()
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.theta.len() {
            return Err(Error::dims(format!(
                "linear model has {} coefficients but input has {} features",
                self.theta.len(),
                x.cols()
            )));
        }
        x.matvec(&self.theta)
    }
}
