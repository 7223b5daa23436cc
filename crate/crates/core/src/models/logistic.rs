use serde::{Deserialize, Serialize};

use super::{log_sum_exp, softmax_rows, BestIterate, Classifier};
use crate::error::{Error, Result};
use crate::numkit::{Adam, AdamConfig, Matrix};

/// Multinomial logistic regression, `p(y|x) = softmax(Wx + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl LogisticModel {
    pub fn new(weights: Matrix, biases: Vec<f64>) -> Result<Self> {
        if weights.rows() != biases.len() || biases.is_empty() {
            return Err(Error::dims(format!(
                "{} weight rows but {} biases",
                weights.rows(),
                biases.len()
            )));
        }
        Ok(Self { weights, biases })
    }

    pub fn zeros(classes: usize, features: usize) -> Self {
        Self {
            weights: Matrix::zeros(classes, features),
            biases: vec![0.0; classes],
        }
    }

    pub fn features(&self) -> usize {
        self.weights.cols()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut p = self.weights.as_slice().to_vec();
        p.extend_from_slice(&self.biases);
        p
    }

    fn set_params(&mut self, flat: &[f64]) {
        let nw = self.weights.rows() * self.weights.cols();
        self.weights.as_mut_slice().copy_from_slice(&flat[..nw]);
        self.biases.copy_from_slice(&flat[nw..]);
    }

    fn logits(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.features() {
            return Err(Error::dims(format!(
                "model has {} features, input has {}",
                self.features(),
                x.cols()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), self.biases.len());
        for i in 0..x.rows() {
            let row = x.row(i);
            for (c, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = self.biases[c] + row.iter().zip(self.weights.row(c)).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Ok(out)
    }

    /// Mean softmax cross-entropy and its gradient.
    pub fn loss_and_grad(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        let logits = self.logits(x)?;
        let n = x.rows();
        let mut loss = 0.0;
        for (i, &c) in labels.iter().enumerate() {
            loss += log_sum_exp(logits.row(i)) - logits[(i, c)];
        }
        let mut delta = logits;
        softmax_rows(&mut delta);
        for (i, &c) in labels.iter().enumerate() {
            delta[(i, c)] -= 1.0;
        }
        let (classes, d) = (self.biases.len(), self.features());
        let mut grad = vec![0.0; classes * d + classes];
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            let xi = x.row(i);
            for c in 0..classes {
                let dv = delta[(i, c)] * inv_n;
                for (g, &xv) in grad[c * d..(c + 1) * d].iter_mut().zip(xi) {
                    *g += dv * xv;
                }
                grad[classes * d + c] += dv;
            }
        }
        Ok((loss * inv_n, grad))
    }
}

impl Classifier for LogisticModel {
    fn classes(&self) -> usize {
        self.biases.len()
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let mut p = self.logits(x)?;
        softmax_rows(&mut p);
        Ok(p)
    }
}

/// Argmax class per row; ties go to the lowest index.
pub fn predict_labels<C: Classifier + ?Sized>(model: &C, x: &Matrix) -> Result<Vec<usize>> {
    let p = model.predict_proba(x)?;
    Ok(p.row_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect())
}

/// Trains from zero weights with `classes = max(label) + 1`.
pub fn train_logistic(x: &Matrix, labels: &[usize], epochs: usize, lr: f64) -> Result<LogisticModel> {
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    train_logistic_with(x, labels, classes, epochs, AdamConfig::with_lr(lr)).map(|(m, _)| m)
}

/// Full-batch Adam on softmax cross-entropy from zero weights. Returns the
/// lowest-loss iterate and the per-epoch loss trace.
pub fn train_logistic_with(
    x: &Matrix,
    labels: &[usize],
    classes: usize,
    epochs: usize,
    adam: AdamConfig,
) -> Result<(LogisticModel, Vec<f64>)> {
    if labels.len() != x.rows() {
        return Err(Error::dims(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::InsufficientSamples("no training examples".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
        return Err(Error::InvalidConfig(format!("label {bad} outside {classes} classes")));
    }
    if epochs == 0 {
        return Err(Error::InvalidConfig("training needs at least one epoch".into()));
    }
    adam.validate()?;
    let mut model = LogisticModel::zeros(classes, x.cols());
    let mut params = model.flatten();
    let mut opt = Adam::new(adam, params.len());
    let mut trace = Vec::with_capacity(epochs + 1);
    let mut best: Option<BestIterate> = None;
    for epoch in 0..=epochs {
        model.set_params(&params);
        let (loss, grad) = model.loss_and_grad(x, labels)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(loss);
        match best.as_mut() {
            Some(b) => b.offer(loss, &params),
            None => best = Some(BestIterate::new(loss, &params)),
        }
        if epoch < epochs {
            opt.step(&mut params, &grad);
        }
    }
    model.set_params(&best.expect("evaluated").params);
    Ok((model, trace))
}
