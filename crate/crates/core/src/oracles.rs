//! Closed-form expectations for linear distillation, bootstrap resampling
//! and inverse-variance target combination.
//!
//! Design-dependent formulas condition on the supplied `X`; averages over
//! test inputs divide by the number of test rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Cholesky, LeastSquares, Matrix};

/// Shared inputs for oracle evaluation, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInputs {
    pub sigma_t2: f64,
    pub sigma_eta2: f64,
    pub sigma2: f64,
    pub theta_t: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub x: Matrix,
    pub x_test: Matrix,
    pub k: usize,
    pub m: usize,
    pub d: usize,
}

impl OracleInputs {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_t2", self.sigma_t2), ("sigma_eta2", self.sigma_eta2), ("sigma2", self.sigma2)] {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.k == 0 || self.m == 0 || self.d == 0 {
            return Err(Error::InvalidConfig("k, m and d must be at least 1".into()));
        }
        let d = self.x.cols();
        if self.d != d || self.x_test.cols() != d || self.theta_t.len() != d || self.theta_star.len() != d {
            return Err(Error::dims("oracle inputs disagree on the feature dimension"));
        }
        Ok(())
    }
}

fn check_variance(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be a finite non-negative variance, got {v}")))
    }
}

/// `σ_T² (XᵀX)⁻¹`, the covariance of the OLS student coefficients.
pub fn param_covariance(sigma_t2: f64, x: &Matrix) -> Result<Matrix> {
    check_variance("sigma_t2", sigma_t2)?;
    Ok(LeastSquares::new(x)?.gram_inverse().scale(sigma_t2))
}

/// `σ_T² xᵀ(XᵀX)⁻¹x`, the across-student variance at one input.
pub fn per_point_variance(sigma_t2: f64, x_point: &[f64], x: &Matrix) -> Result<f64> {
    check_variance("sigma_t2", sigma_t2)?;
    Ok(sigma_t2 * LeastSquares::new(x)?.gram_inverse_quad(x_point)?)
}

/// `(1/n_test) tr(X_test (XᵀX)⁻¹ X_testᵀ)`.
pub fn mean_leverage(x: &Matrix, x_test: &Matrix) -> Result<f64> {
    if x_test.rows() == 0 {
        return Err(Error::InsufficientSamples("empty test set".into()));
    }
    let ls = LeastSquares::new(x)?;
    let mut total = 0.0;
    for row in x_test.row_iter() {
        total += ls.gram_inverse_quad(row)?;
    }
    Ok(total / x_test.rows() as f64)
}

/// `(tr M, tr M²)` for `M = X_test (XᵀX)⁻¹ X_testᵀ / n_test`.
pub fn leverage_moments(x: &Matrix, x_test: &Matrix) -> Result<(f64, f64)> {
    if x_test.rows() == 0 {
        return Err(Error::InsufficientSamples("empty test set".into()));
    }
    let g = LeastSquares::new(x)?.gram_inverse();
    let gs = g.matmul(&x_test.gram())?;
    let n2 = (x_test.rows() * x_test.rows()) as f64;
    Ok((gs.trace() / x_test.rows() as f64, gs.matmul(&gs)?.trace() / n2))
}

/// Standard deviation of the inter-student variance estimate from `p`
/// linear students under Gaussian teacher noise:
/// `σ_T² sqrt(2 tr(M²) / (p − 1))`.
pub fn inter_student_variance_std_error(sigma_t2: f64, x: &Matrix, x_test: &Matrix, p: usize) -> Result<f64> {
    check_variance("sigma_t2", sigma_t2)?;
    if p < 2 {
        return Err(Error::TooFewStudents(p));
    }
    let (_, tr_m2) = leverage_moments(x, x_test)?;
    Ok(sigma_t2 * (2.0 * tr_m2 / (p - 1) as f64).sqrt())
}

/// `(σ_T²/n_test) tr(X_test (XᵀX)⁻¹ X_testᵀ)`. This is both the expected
/// test error against the teacher and the expected inter-student variance.
pub fn expected_mse_vs_teacher(sigma_t2: f64, x: &Matrix, x_test: &Matrix) -> Result<f64> {
    check_variance("sigma_t2", sigma_t2)?;
    Ok(sigma_t2 * mean_leverage(x, x_test)?)
}

/// Expected test error against noisy ground truth:
/// `(1/n_test)‖X_test(θ_T − θ*)‖² + σ_T² (1/n_test) tr(·) + σ_η²`.
pub fn expected_mse_vs_truth(
    theta_t: &[f64],
    theta_star: &[f64],
    sigma_t2: f64,
    sigma_eta2: f64,
    x: &Matrix,
    x_test: &Matrix,
) -> Result<f64> {
    check_variance("sigma_eta2", sigma_eta2)?;
    if theta_t.len() != theta_star.len() || theta_t.len() != x_test.cols() {
        return Err(Error::dims("coefficient vectors must match the test feature count"));
    }
    let diff: Vec<f64> = theta_t.iter().zip(theta_star).map(|(a, b)| a - b).collect();
    let shift = x_test.matvec(&diff)?;
    let bias = shift.iter().map(|v| v * v).sum::<f64>() / x_test.rows() as f64;
    Ok(bias + expected_mse_vs_teacher(sigma_t2, x, x_test)? + sigma_eta2)
}

/// `(1/n) XᵀX`.
pub fn second_moment(x: &Matrix) -> Matrix {
    x.gram().scale(1.0 / x.rows() as f64)
}

/// `(σ²/m) xᵀ Σ_X⁻¹ x`, the ground-truth bootstrap predictive variance.
pub fn bootstrap_variance(sigma2: f64, m: usize, x_point: &[f64], sigma_x: &Matrix) -> Result<f64> {
    check_variance("sigma2", sigma2)?;
    if m == 0 {
        return Err(Error::InvalidConfig("bootstrap size must be at least 1".into()));
    }
    Ok(sigma2 / m as f64 * Cholesky::new(sigma_x)?.inverse_quad(x_point)?)
}

/// `σ² + σ² d / m`.
pub fn bootstrap_mse(sigma2: f64, d: usize, m: usize) -> Result<f64> {
    check_variance("sigma2", sigma2)?;
    if m == 0 {
        return Err(Error::InvalidConfig("bootstrap size must be at least 1".into()));
    }
    Ok(sigma2 + sigma2 * d as f64 / m as f64)
}

/// `(σ_T²/k) xᵀ(XᵀX)⁻¹x` for a student fit to the mean of `k` responses.
pub fn averaged_prediction_variance(sigma_t2: f64, k: usize, x_point: &[f64], x: &Matrix) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    Ok(per_point_variance(sigma_t2, x_point, x)? / k as f64)
}

fn check_positive(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveVariance(a, b))
    }
}

/// Inverse-variance weights `(w_T, w_S)`, summing to one.
pub fn optimal_weights(sigma_t2_hat: f64, sigma_s2: f64) -> Result<(f64, f64)> {
    check_positive(sigma_t2_hat, sigma_s2)?;
    let total = sigma_t2_hat + sigma_s2;
    let w_t = sigma_s2 / total;
    Ok((w_t, 1.0 - w_t))
}

/// `(1/k) σ_T² σ_S² / (σ_T² + σ_S²)`.
pub fn min_combined_variance(sigma_t2_hat: f64, sigma_s2: f64, k: usize) -> Result<f64> {
    check_positive(sigma_t2_hat, sigma_s2)?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    Ok(sigma_t2_hat * sigma_s2 / (sigma_t2_hat + sigma_s2) / k as f64)
}

/// `(w² σ_T² + (1−w)² σ_S²) / k` for an arbitrary teacher weight `w`.
pub fn combined_variance(w_t: f64, sigma_t2: f64, sigma_s2: f64, k: usize) -> f64 {
    let w_s = 1.0 - w_t;
    (w_t * w_t * sigma_t2 + w_s * w_s * sigma_s2) / k as f64
}
