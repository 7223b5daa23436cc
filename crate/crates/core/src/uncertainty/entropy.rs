use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::numkit::{mean, sample_variance, Matrix};

const SUM_TOLERANCE: f64 = 1e-6;

/// Natural-log entropy, `0 log 0 = 0`. Inputs within `1e-6` of unit mass
/// are renormalized.
pub fn predictive_entropy(proba: &[f64]) -> Result<f64> {
    if proba.is_empty() {
        return Err(Error::NotADistribution("empty probability vector".into()));
    }
    if let Some(bad) = proba.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::NotADistribution(format!("entry {bad} is not a probability")));
    }
    let total: f64 = proba.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::NotADistribution(format!("entries sum to {total}")));
    }
    Ok(proba
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyGroup {
    All,
    Correct,
    Incorrect,
}

/// Entropy summary for one group; empty groups report zero mean and std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub group: EntropyGroup,
    pub count: usize,
    pub mean_entropy: f64,
    pub std_entropy: f64,
}

impl EntropyReport {
    fn of(group: EntropyGroup, values: &[f64]) -> Self {
        Self {
            group,
            count: values.len(),
            mean_entropy: if values.is_empty() { 0.0 } else { mean(values) },
            std_entropy: sample_variance(values).sqrt(),
        }
    }
}

/// All / correct / incorrect entropy groups for a classifier on labelled data.
pub fn entropy_report<C: Classifier + ?Sized>(model: &C, x_test: &Matrix, labels: &[usize]) -> Result<Vec<EntropyReport>> {
    entropy_report_from_proba(&model.predict_proba(x_test)?, labels)
}

/// Groups by whether the argmax of each row matches its label.
pub fn entropy_report_from_proba(proba: &Matrix, labels: &[usize]) -> Result<Vec<EntropyReport>> {
    if proba.rows() != labels.len() {
        return Err(Error::dims(format!("{} rows but {} labels", proba.rows(), labels.len())));
    }
    let mut all = Vec::with_capacity(labels.len());
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for (row, &label) in proba.row_iter().zip(labels) {
        if label >= row.len() {
            return Err(Error::InvalidConfig(format!("label {label} outside {} classes", row.len())));
        }
        let h = predictive_entropy(row)?;
        let argmax = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0;
        all.push(h);
        if argmax == label {
            correct.push(h);
        } else {
            incorrect.push(h);
        }
    }
    Ok(vec![
        EntropyReport::of(EntropyGroup::All, &all),
        EntropyReport::of(EntropyGroup::Correct, &correct),
        EntropyReport::of(EntropyGroup::Incorrect, &incorrect),
    ])
}

/// Whether `mean ± std` intervals intersect.
pub fn intervals_overlap(a: &EntropyReport, b: &EntropyReport) -> bool {
    (a.mean_entropy - b.mean_entropy).abs() <= a.std_entropy + b.std_entropy
}

/// `Some(true)` when the intervals are disjoint; `None` when either group
/// has fewer than two members and no spread is defined.
pub fn significance(a: &EntropyReport, b: &EntropyReport) -> Option<bool> {
    if a.count < 2 || b.count < 2 {
        None
    } else {
        Some(!intervals_overlap(a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(predictive_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((predictive_entropy(&[0.1; 10]).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!((predictive_entropy(&[0.5, 0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(predictive_entropy(&[0.5, 0.6]).is_err());
        assert!(predictive_entropy(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn uniform_rows_have_constant_entropy() {
        let p = Matrix::filled(6, 4, 0.25);
        let r = entropy_report_from_proba(&p, &[0, 1, 2, 3, 0, 1]).unwrap();
        for g in &r {
            if g.count > 0 {
                assert!((g.mean_entropy - 4f64.ln()).abs() < 1e-12);
                assert_eq!(g.std_entropy, 0.0);
            }
        }
        assert_eq!(r[0].count, r[1].count + r[2].count);
    }

    #[test]
    fn empty_group_and_significance() {
        let p = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let r = entropy_report_from_proba(&p, &[0, 1]).unwrap();
        assert_eq!(r[2].count, 0);
        assert_eq!(r[2].std_entropy, 0.0);
        assert_eq!(significance(&r[2], &r[0]), None);
        assert_eq!(significance(&r[0], &r[0]), Some(false));
    }
}
