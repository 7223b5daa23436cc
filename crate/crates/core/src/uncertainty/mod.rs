//! Uncertainty metrics for students, classifiers and sampled sequences.

mod entropy;
mod noise;
mod sequences;

pub use entropy::{
    entropy_report, entropy_report_from_proba, intervals_overlap, predictive_entropy, significance,
    EntropyGroup, EntropyReport,
};
pub use noise::{noise_decomposition, NoiseDecomposition};
pub use sequences::{cosine_similarity, dispersion, embed_sequence, intra_variance_gap};

use crate::error::{Error, Result};
use crate::numkit::{mean, Matrix};

/// Mean over test inputs (columns) of the across-student sample variance.
pub fn inter_student_variance(predictions: &Matrix) -> Result<f64> {
    if predictions.rows() < 2 {
        return Err(Error::TooFewStudents(predictions.rows()));
    }
    if predictions.cols() == 0 {
        return Err(Error::InsufficientSamples("no test inputs".into()));
    }
    Ok(mean(&column_variances(predictions)))
}

/// Per-column sample variance (divisor `rows - 1`); zeros when `rows < 2`.
pub fn column_variances(predictions: &Matrix) -> Vec<f64> {
    let (p, n) = predictions.shape();
    if p < 2 {
        return vec![0.0; n];
    }
    let mut means = vec![0.0; n];
    for row in predictions.row_iter() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= p as f64;
    }
    let mut vars = vec![0.0; n];
    for row in predictions.row_iter() {
        for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut vars {
        *s /= (p - 1) as f64;
    }
    vars
}

/// `(1/n) Σ (a_i - b_i)²`.
pub fn eval_mse(predictions: &[f64], reference: &[f64]) -> Result<f64> {
    if predictions.len() != reference.len() {
        return Err(Error::dims(format!(
            "{} predictions against {} references",
            predictions.len(),
            reference.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InsufficientSamples("no predictions".into()));
    }
    Ok(predictions
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / predictions.len() as f64)
}
