//! Distillation target construction and ensembles of independently
//! distilled students.
//!
//! Student `j` of an ensemble draws everything from stream `j` of the
//! master seed: child 0 supplies teacher responses, child 1 supplies
//! student-side randomness (initial perturbations, student samples).
//! Students are trained in parallel and collected in index order, so an
//! ensemble is a pure function of its inputs and master seed.

mod regression;
mod sequence;
mod targets;

pub use regression::{distill_ensemble, MlpRecipe, Student, StudentTrainer, PRELIMINARY_STUDENTS};
pub use sequence::{distill_sequence_student_ensemble, sequence_objective, SequenceRecipe};
pub use targets::{build_targets, DistillTargets, StudentStats, VARIANCE_FLOOR};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream};

pub(crate) const TEACHER_CHILD: u64 = 0;
pub(crate) const STUDENT_CHILD: u64 = 1;
/// First stream id of auxiliary ensembles, far above any student index.
pub(crate) const AUXILIARY_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SingleResponse,
    MultiResponse,
    Averaging,
    VarianceWeighted,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::SingleResponse => "single_response",
            Method::MultiResponse => "multi_response",
            Method::Averaging => "averaging",
            Method::VarianceWeighted => "variance_weighted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub method: Method,
    /// Teacher responses per input.
    pub k: usize,
    /// Ensemble size.
    pub students: usize,
}

impl StrategyConfig {
    pub fn new(method: Method, k: usize, students: usize) -> Self {
        Self { method, k, students }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.method == Method::VarianceWeighted && self.k < 2 {
            return Err(Error::InsufficientSamples(
                "variance weighting needs at least two teacher responses".into(),
            ));
        }
        if self.students == 0 {
            return Err(Error::InvalidConfig("an ensemble needs at least one student".into()));
        }
        Ok(())
    }

    /// Responses actually drawn per input; single-response ignores `k`.
    pub fn responses_drawn(&self) -> usize {
        if self.method == Method::SingleResponse {
            1
        } else {
            self.k
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudentEnsemble<M> {
    pub students: Vec<M>,
    pub stream_ids: Vec<u64>,
    /// Row `j` holds student `j`'s predictions on the shared test inputs.
    pub predictions: Option<Matrix>,
    /// Per-epoch training loss of each iteratively trained student.
    pub loss_traces: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl<M> StudentEnsemble<M> {
    pub fn len(&self) -> usize {
        self.students.len()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }
}

pub(crate) fn student_stream(master_seed: u64, index: usize) -> RngStream {
    RngStream::new(master_seed, index as u64)
}

/// Collects per-student results in index order, reporting the lowest
/// failing index.
pub(crate) fn collect_in_order<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(Error::StudentFailed {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}
