//! Bootstrap resampling harnesses.
//!
//! The teacher variant relabels every training input with the teacher's
//! prediction and resamples the relabelled pairs; the ground-truth variant
//! resamples the original pairs. Replicate `b` draws its `m` indices from
//! stream `b`. A replicate whose resampled design is singular is redrawn
//! once from the same stream.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distillation::{collect_in_order, Student, StudentEnsemble, StudentTrainer};
use crate::error::{Error, Result};
use crate::models::{LinearModel, Regressor};
use crate::numkit::{Matrix, RngStream};
use crate::uncertainty::column_variances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapVariant {
    TeacherModel,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub variant: BootstrapVariant,
    /// Resample size.
    pub m: usize,
    /// Number of replicates.
    pub replicates: usize,
    #[serde(default)]
    pub beta_grid: Option<Vec<f64>>,
}

impl BootstrapConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.m == 0 || self.m > n {
            return Err(Error::InvalidConfig(format!("bootstrap size {} must lie in 1..={n}", self.m)));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("at least one replicate is required".into()));
        }
        if let Some(grid) = &self.beta_grid {
            if grid.is_empty() || grid.iter().any(|&b| !(b > 0.0 && b <= 1.0)) {
                return Err(Error::InvalidConfig("beta grid values must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub ensemble: StudentEnsemble<Student>,
    /// Replicates whose first draw was singular.
    pub retried: Vec<usize>,
    /// Least-squares teacher fitted for the teacher variant when none was
    /// supplied.
    pub fitted_teacher: Option<LinearModel>,
}

/// Student, loss trace, test predictions and whether the draw was redone.
type Replicate = (Student, Vec<f64>, Vec<f64>, bool);

/// Trains one student per replicate and predicts on `x_test`.
///
/// For the teacher variant `teacher` supplies the relabelling model; when
/// absent, the least-squares fit on `(x, y)` is used.
pub fn run_bootstrap(
    x: &Matrix,
    y: &[f64],
    x_test: &Matrix,
    config: &BootstrapConfig,
    trainer: &StudentTrainer,
    teacher: Option<&dyn Regressor>,
    master_seed: u64,
) -> Result<BootstrapOutcome> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::dims(format!("{n} rows but {} targets", y.len())));
    }
    config.validate(n)?;
    let (labels, fitted_teacher) = match config.variant {
        BootstrapVariant::GroundTruth => (y.to_vec(), None),
        BootstrapVariant::TeacherModel => match teacher {
            Some(t) => (t.predict(x)?, None),
            None => {
                let t = LinearModel::fit(x, y)?;
                (t.predict(x)?, Some(t))
            }
        },
    };

    let results: Vec<Result<Replicate>> = (0..config.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(master_seed, b as u64);
            let mut retried = false;
            let (student, trace) = loop {
                let idx: Vec<usize> = (0..config.m).map(|_| rng.index(n)).collect();
                let xb = x.select_rows(&idx);
                let yb: Vec<f64> = idx.iter().map(|&i| labels[i]).collect();
                match trainer.fit(&xb, &yb, &mut rng.child(1)) {
                    Err(Error::SingularDesign { .. }) if !retried => retried = true,
                    other => break other?,
                }
            };
            let preds = student.predict(x_test)?;
            Ok((student, trace, preds, retried))
        })
        .collect();
    let fitted = collect_in_order(results)?;

    let mut predictions = Matrix::zeros(fitted.len(), x_test.rows());
    let mut students = Vec::with_capacity(fitted.len());
    let mut loss_traces = Vec::with_capacity(fitted.len());
    let mut retried = Vec::new();
    for (b, (student, trace, preds, r)) in fitted.into_iter().enumerate() {
        predictions.row_mut(b).copy_from_slice(&preds);
        students.push(student);
        loss_traces.push(trace);
        if r {
            retried.push(b);
        }
    }
    let warnings = if retried.is_empty() {
        Vec::new()
    } else {
        vec![format!("{} replicates were redrawn after a singular design", retried.len())]
    };
    Ok(BootstrapOutcome {
        ensemble: StudentEnsemble {
            students,
            stream_ids: (0..config.replicates as u64).collect(),
            predictions: Some(predictions),
            loss_traces,
            warnings,
        },
        retried,
        fitted_teacher,
    })
}

/// Per-test-input variance across students (divisor `B - 1`; zeros for a
/// single student).
pub fn predictive_variance<M: Regressor>(ensemble: &StudentEnsemble<M>, x_test: &Matrix) -> Result<Vec<f64>> {
    let mut preds = Matrix::zeros(ensemble.len(), x_test.rows());
    for (j, s) in ensemble.students.iter().enumerate() {
        preds.row_mut(j).copy_from_slice(&s.predict(x_test)?);
    }
    Ok(column_variances(&preds))
}
