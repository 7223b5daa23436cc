//! Teacher and student model families.
//!
//! Regression models implement [`Regressor`], classifiers implement
//! [`Classifier`]. The tabular [`CategoricalSequenceModel`] stands in for an
//! autoregressive language model at toy scale.

mod linear;
mod logistic;
mod mlp;
mod noise;
mod persist;
mod sequence;

pub use linear::LinearModel;
pub use logistic::{predict_labels, train_logistic, train_logistic_with, LogisticModel};
pub use mlp::{
    init_mlp, init_mlp_with, perturb_parameters, train_mlp, train_mlp_with, Activation, MlpLoss,
    MlpModel,
};
pub use noise::{teacher_respond, NoiseSpec};
pub use persist::{LayerDocument, ModelBody, ModelDocument, FORMAT_VERSION};
pub use sequence::{
    sample_sequences, sequence_log_prob, softmax_with_temperature, train_sequence_objective,
    train_sequence_student, CategoricalSequenceModel, SequenceObjective, EOS,
};

use crate::error::Result;
use crate::numkit::Matrix;

/// A deterministic map from feature rows to scalar predictions.
pub trait Regressor: Send + Sync {
    fn input_dim(&self) -> usize;

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>>;
}

/// A model producing a categorical distribution per feature row.
pub trait Classifier: Send + Sync {
    fn classes(&self) -> usize;

    /// `n x classes` matrix whose rows sum to one.
    fn predict_proba(&self, x: &Matrix) -> Result<Matrix>;
}

pub fn predict<M: Regressor + ?Sized>(model: &M, x: &Matrix) -> Result<Vec<f64>> {
    model.predict(x)
}

pub fn predict_proba<C: Classifier + ?Sized>(model: &C, x: &Matrix) -> Result<Matrix> {
    model.predict_proba(x)
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows(logits: &mut Matrix) {
    let cols = logits.cols();
    for row in logits.as_mut_slice().chunks_mut(cols.max(1)) {
        softmax_in_place(row);
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// `log(sum(exp(row)))`, stable for large entries.
pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Parameters with the lowest training loss seen so far.
pub(crate) struct BestIterate {
    pub loss: f64,
    pub params: Vec<f64>,
}

impl BestIterate {
    pub fn new(loss: f64, params: &[f64]) -> Self {
        Self {
            loss,
            params: params.to_vec(),
        }
    }

    pub fn offer(&mut self, loss: f64, params: &[f64]) {
        if loss < self.loss {
            self.loss = loss;
            self.params.copy_from_slice(params);
        }
    }
}
