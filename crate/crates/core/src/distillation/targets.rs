use super::Method;
use crate::error::{Error, Result};
use crate::numkit::{mean, sample_variance, Matrix};
use crate::oracles::optimal_weights;

/// Lower bound applied to both variances before inverse weighting.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Per-input mean and variance of a student population's predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillTargets {
    pub targets: Vec<f64>,
    /// Per-input `(w_T, w_S)` for variance weighting.
    pub weights: Option<Vec<(f64, f64)>>,
    pub teacher_sample_matrix: Matrix,
    /// Inputs where both variances were zero and equal weights were used.
    pub degenerate_inputs: Vec<usize>,
}

/// Regression targets from an `n x k` matrix of teacher responses.
///
/// Under squared loss the multi-response objective `(1/k) Σ_j (f - y_j)²`
/// differs from `(f - mean_j y_j)²` by a constant, so multi-response and
/// averaging share the row mean as target.
pub fn build_targets(samples: &Matrix, method: Method, student_stats: Option<&StudentStats>) -> Result<DistillTargets> {
    let (n, k) = samples.shape();
    if k == 0 {
        return Err(Error::InsufficientSamples("no teacher responses".into()));
    }
    let mut out = DistillTargets {
        targets: Vec::with_capacity(n),
        weights: None,
        teacher_sample_matrix: samples.clone(),
        degenerate_inputs: Vec::new(),
    };
    match method {
        Method::SingleResponse => out.targets = samples.column(0),
        Method::MultiResponse | Method::Averaging => out.targets = samples.row_iter().map(mean).collect(),
        Method::VarianceWeighted => {
            if k < 2 {
                return Err(Error::InsufficientSamples(format!(
                    "variance weighting needs k >= 2, got {k}"
                )));
            }
            let stats = student_stats
                .ok_or_else(|| Error::InsufficientSamples("variance weighting needs student statistics".into()))?;
            if stats.mean.len() != n || stats.variance.len() != n {
                return Err(Error::dims(format!("student statistics cover {} inputs, expected {n}", stats.mean.len())));
            }
            let mut weights = Vec::with_capacity(n);
            for (i, row) in samples.row_iter().enumerate() {
                let var_t = sample_variance(row);
                let var_s = stats.variance[i];
                if !(var_s >= 0.0) {
                    return Err(Error::NonPositiveVariance(var_t, var_s));
                }
                let (w_t, w_s) = if var_t == 0.0 && var_s == 0.0 {
                    out.degenerate_inputs.push(i);
                    (0.5, 0.5)
                } else {
                    optimal_weights(var_t.max(VARIANCE_FLOOR), var_s.max(VARIANCE_FLOOR))?
                };
                out.targets.push(w_t * mean(row) + w_s * stats.mean[i]);
                weights.push((w_t, w_s));
            }
            out.weights = Some(weights);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> Matrix {
        Matrix::from_rows(&[vec![1.0, 3.0], vec![2.0, 2.0]]).unwrap()
    }

    #[test]
    fn simple_methods() {
        let single = build_targets(&samples(), Method::SingleResponse, None).unwrap();
        assert_eq!(single.targets, vec![1.0, 2.0]);
        let avg = build_targets(&samples(), Method::Averaging, None).unwrap();
        assert_eq!(avg.targets, vec![2.0, 2.0]);
        let one = Matrix::from_rows(&[vec![4.0], vec![5.0]]).unwrap();
        assert_eq!(build_targets(&one, Method::Averaging, None).unwrap().targets, vec![4.0, 5.0]);
    }

    #[test]
    fn weighting() {
        // Row 0 has sample variance 2; row 1 has zero variance.
        let stats = StudentStats {
            mean: vec![0.0, 10.0],
            variance: vec![6.0, 0.0],
        };
        let t = build_targets(&samples(), Method::VarianceWeighted, Some(&stats)).unwrap();
        let w = t.weights.unwrap();
        assert_eq!(w[0], (0.75, 0.25));
        assert_eq!(w[1], (0.5, 0.5));
        assert_eq!(t.degenerate_inputs, vec![1]);
        assert_eq!(t.targets[0], 1.5);
    }

    #[test]
    fn weighting_preconditions() {
        let one = Matrix::from_rows(&[vec![4.0]]).unwrap();
        let stats = StudentStats {
            mean: vec![0.0],
            variance: vec![1.0],
        };
        assert!(build_targets(&one, Method::VarianceWeighted, Some(&stats)).is_err());
        assert!(build_targets(&samples(), Method::VarianceWeighted, None).is_err());
    }
}
