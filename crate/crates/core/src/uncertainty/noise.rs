use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::mean;

/// Regression of per-prompt student dispersion on teacher dispersion, and
/// the excess of student dispersion over a directly trained baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDecomposition {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub avg_noise: f64,
    pub baseline_avg_noise: f64,
    /// `avg_noise - baseline_avg_noise`.
    pub avg_systematic_noise: f64,
}

pub fn noise_decomposition(
    teacher_dispersions: &[f64],
    student_dispersions: &[f64],
    baseline_dispersions: &[f64],
) -> Result<NoiseDecomposition> {
    let n = teacher_dispersions.len();
    if student_dispersions.len() != n || baseline_dispersions.len() != n {
        return Err(Error::dims("per-prompt dispersion lists differ in length"));
    }
    if n < 3 {
        return Err(Error::InsufficientSamples(format!("need at least 3 prompts, got {n}")));
    }
    let all = teacher_dispersions.iter().chain(student_dispersions).chain(baseline_dispersions);
    if all.clone().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("dispersion".into()));
    }
    let mx = mean(teacher_dispersions);
    let my = mean(student_dispersions);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in teacher_dispersions.iter().zip(student_dispersions) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx <= f64::EPSILON * f64::EPSILON * n as f64 * mx.abs().max(1.0) {
        return Err(Error::DegenerateRegression("teacher dispersions are constant".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        0.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    let avg_noise = my;
    let baseline_avg_noise = mean(baseline_dispersions);
    Ok(NoiseDecomposition {
        slope,
        intercept: my - slope * mx,
        r_squared,
        avg_noise,
        baseline_avg_noise,
        avg_systematic_noise: avg_noise - baseline_avg_noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series() {
        let t = [0.1, 0.4, 0.2, 0.7];
        let d = noise_decomposition(&t, &t, &t).unwrap();
        assert!((d.slope - 1.0).abs() < 1e-12);
        assert!((d.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(d.avg_systematic_noise, 0.0);
    }

    #[test]
    fn constant_teacher_is_degenerate() {
        let err = noise_decomposition(&[0.3; 4], &[0.1, 0.2, 0.3, 0.4], &[0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::DegenerateRegression(_)));
    }

    #[test]
    fn constant_student_has_zero_fit() {
        let d = noise_decomposition(&[0.1, 0.2, 0.3], &[0.5; 3], &[0.25; 3]).unwrap();
        assert_eq!(d.r_squared, 0.0);
        assert_eq!(d.slope, 0.0);
        assert_eq!(d.avg_systematic_noise, 0.25);
    }
}
