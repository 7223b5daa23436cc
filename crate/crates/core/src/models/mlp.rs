//! Fully connected networks with a linear output layer.
//!
//! Parameters flatten layer by layer as the row-major weight matrix
//! (`out x in`) followed by the bias vector.

use serde::{Deserialize, Serialize};

use super::{log_sum_exp, softmax_rows, BestIterate, Classifier, Regressor};
use crate::error::{Error, Result};
use crate::numkit::{Adam, AdamConfig, Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_weights: Vec<Matrix>,
    pub layer_biases: Vec<Vec<f64>>,
    pub activation: Activation,
}

/// Training objective over a batch.
#[derive(Debug, Clone, Copy)]
pub enum MlpLoss<'a> {
    /// `(1/n) Σ (f(x_i) - t_i)²`, single output unit.
    Mse(&'a [f64]),
    /// `(1/n) Σ -log softmax(f(x_i))[y_i]`.
    CrossEntropy(&'a [usize]),
}

impl MlpModel {
    pub fn new(layer_weights: Vec<Matrix>, layer_biases: Vec<Vec<f64>>, activation: Activation) -> Result<Self> {
        if layer_weights.is_empty() {
            return Err(Error::EmptyArchitecture);
        }
        if layer_weights.len() != layer_biases.len() {
            return Err(Error::dims("one bias vector is needed per layer"));
        }
        for (l, (w, b)) in layer_weights.iter().zip(&layer_biases).enumerate() {
            if w.rows() != b.len() {
                return Err(Error::dims(format!("layer {l}: {} units but {} biases", w.rows(), b.len())));
            }
            if l > 0 && layer_weights[l - 1].rows() != w.cols() {
                return Err(Error::dims(format!("layer {l} does not chain with layer {}", l - 1)));
            }
        }
        Ok(Self {
            layer_weights,
            layer_biases,
            activation,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layer_weights[0].cols()
    }

    pub fn output_width(&self) -> usize {
        self.layer_weights.last().map_or(0, Matrix::rows)
    }

    /// Layer widths from input to output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layer_weights.iter().map(Matrix::rows))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_weights
            .iter()
            .map(|w| w.rows() * w.cols() + w.rows())
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.layer_weights.iter().zip(&self.layer_biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dims(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for (w, b) in self.layer_weights.iter_mut().zip(self.layer_biases.iter_mut()) {
            let nw = w.rows() * w.cols();
            w.as_mut_slice().copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = b.len();
            b.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Raw network outputs, `n x output_width`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.pop().expect("at least one layer").1)
    }

    /// `(pre-activation, activation)` per layer; the last activation is the
    /// identity.
    fn forward_cached(&self, x: &Matrix) -> Result<Vec<(Matrix, Matrix)>> {
        if x.cols() != self.input_width() {
            return Err(Error::dims(format!(
                "network expects {} features, input has {}",
                self.input_width(),
                x.cols()
            )));
        }
        let depth = self.layer_weights.len();
        let mut cache: Vec<(Matrix, Matrix)> = Vec::with_capacity(depth);
        for l in 0..depth {
            let input = if l == 0 { x } else { &cache[l - 1].1 };
            let z = affine(input, &self.layer_weights[l], &self.layer_biases[l]);
            let h = if l + 1 == depth {
                z.clone()
            } else {
                z.map(|v| self.activation.apply(v))
            };
            cache.push((z, h));
        }
        Ok(cache)
    }

    pub fn loss(&self, x: &Matrix, loss: MlpLoss<'_>) -> Result<f64> {
        let out = self.forward(x)?;
        batch_loss(&out, loss).map(|(l, _)| l)
    }

    /// Loss and its gradient with respect to the flattened parameters.
    pub fn loss_and_grad(&self, x: &Matrix, loss: MlpLoss<'_>) -> Result<(f64, Vec<f64>)> {
        let cache = self.forward_cached(x)?;
        let (value, mut delta) = batch_loss(&cache.last().expect("nonempty").1, loss)?;

        let depth = self.layer_weights.len();
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); depth];
        for l in (0..depth).rev() {
            let w = &self.layer_weights[l];
            let input = if l == 0 { x } else { &cache[l - 1].1 };
            let (out_w, in_w) = (w.rows(), w.cols());
            let mut g = vec![0.0; out_w * in_w + out_w];
            let (gw, gb) = g.split_at_mut(out_w * in_w);
            for i in 0..x.rows() {
                let d = delta.row(i);
                let h = input.row(i);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    gb[o] += dv;
                    for (gk, &hk) in gw[o * in_w..(o + 1) * in_w].iter_mut().zip(h) {
                        *gk += dv * hk;
                    }
                }
            }
            grads[l] = g;
            if l > 0 {
                let z_prev = &cache[l - 1].0;
                let mut next = Matrix::zeros(x.rows(), in_w);
                for i in 0..x.rows() {
                    let d = delta.row(i);
                    let row = next.row_mut(i);
                    for (o, &dv) in d.iter().enumerate() {
                        if dv == 0.0 {
                            continue;
                        }
                        for (r, &wk) in row.iter_mut().zip(w.row(o)) {
                            *r += dv * wk;
                        }
                    }
                    for (r, &z) in row.iter_mut().zip(z_prev.row(i)) {
                        *r *= self.activation.derivative(z);
                    }
                }
                delta = next;
            }
        }
        Ok((value, grads.concat()))
    }
}

/// `input · wᵀ + b`.
fn affine(input: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(input.rows(), w.rows());
    for i in 0..input.rows() {
        let h = input.row(i);
        for (o, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = b[o] + h.iter().zip(w.row(o)).map(|(a, c)| a * c).sum::<f64>();
        }
    }
    out
}

/// Loss value and `dL/d(output)` for a batch of raw outputs.
fn batch_loss(out: &Matrix, loss: MlpLoss<'_>) -> Result<(f64, Matrix)> {
    let n = out.rows();
    if n == 0 {
        return Err(Error::InsufficientSamples("empty training batch".into()));
    }
    let inv_n = 1.0 / n as f64;
    match loss {
        MlpLoss::Mse(targets) => {
            if out.cols() != 1 || targets.len() != n {
                return Err(Error::dims(format!(
                    "squared loss needs one output unit and {n} targets, got {} units and {} targets",
                    out.cols(),
                    targets.len()
                )));
            }
            let mut delta = Matrix::zeros(n, 1);
            let mut total = 0.0;
            for i in 0..n {
                let r = out[(i, 0)] - targets[i];
                total += r * r;
                delta[(i, 0)] = 2.0 * r * inv_n;
            }
            Ok((total * inv_n, delta))
        }
        MlpLoss::CrossEntropy(labels) => {
            if labels.len() != n {
                return Err(Error::dims(format!("{n} outputs but {} labels", labels.len())));
            }
            let classes = out.cols();
            if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
                return Err(Error::InvalidConfig(format!("label {bad} outside {classes} classes")));
            }
            let mut total = 0.0;
            for (i, &c) in labels.iter().enumerate() {
                total += log_sum_exp(out.row(i)) - out[(i, c)];
            }
            let mut delta = out.clone();
            softmax_rows(&mut delta);
            for (i, &c) in labels.iter().enumerate() {
                delta[(i, c)] -= 1.0;
            }
            Ok((total * inv_n, delta.scale(inv_n)))
        }
    }
}

impl Regressor for MlpModel {
    fn input_dim(&self) -> usize {
        self.input_width()
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if self.output_width() != 1 {
            return Err(Error::dims(format!(
                "regression needs a single output unit, network has {}",
                self.output_width()
            )));
        }
        Ok(self.forward(x)?.into_vec())
    }
}

impl Classifier for MlpModel {
    fn classes(&self) -> usize {
        self.output_width()
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = self.forward(x)?;
        softmax_rows(&mut out);
        Ok(out)
    }
}

/// Kaiming-initialized relu network; biases start at zero.
pub fn init_mlp(layer_sizes: &[usize], rng: &mut RngStream) -> Result<MlpModel> {
    init_mlp_with(layer_sizes, Activation::Relu, rng)
}

/// Weights ~ `N(0, 2/fan_in)` for relu and `N(0, 1/fan_in)` for tanh.
pub fn init_mlp_with(layer_sizes: &[usize], activation: Activation, rng: &mut RngStream) -> Result<MlpModel> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::EmptyArchitecture);
    }
    let gain = match activation {
        Activation::Relu => 2.0,
        Activation::Tanh => 1.0,
    };
    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let std = (gain / fan_in as f64).sqrt();
        weights.push(crate::numkit::gaussian_matrix(rng, fan_out, fan_in, 0.0, std)?);
        biases.push(vec![0.0; fan_out]);
    }
    MlpModel::new(weights, biases, activation)
}

/// `W_ij ← W_ij (1 + ε_ij)`, `ε_ij ~ N(0, sigma_init²)`; biases are kept.
pub fn perturb_parameters(model: &MlpModel, sigma_init: f64, rng: &mut RngStream) -> Result<MlpModel> {
    if !(sigma_init >= 0.0) {
        return Err(Error::NegativeStd(sigma_init));
    }
    let mut out = model.clone();
    if sigma_init == 0.0 {
        return Ok(out);
    }
    for w in &mut out.layer_weights {
        for v in w.as_mut_slice() {
            *v *= 1.0 + sigma_init * rng.standard_normal();
        }
    }
    Ok(out)
}

/// Full-batch Adam on the squared loss with default moment settings.
pub fn train_mlp(init: &MlpModel, x: &Matrix, targets: &[f64], epochs: usize, lr: f64) -> Result<MlpModel> {
    train_mlp_with(init, x, MlpLoss::Mse(targets), epochs, AdamConfig::with_lr(lr)).map(|(m, _)| m)
}

/// Full-batch Adam for `epochs` steps. Returns the iterate with the lowest
/// training loss (never worse than `init`) and the per-epoch loss trace.
pub fn train_mlp_with(
    init: &MlpModel,
    x: &Matrix,
    loss: MlpLoss<'_>,
    epochs: usize,
    adam: AdamConfig,
) -> Result<(MlpModel, Vec<f64>)> {
    if epochs == 0 {
        return Err(Error::InvalidConfig("training needs at least one epoch".into()));
    }
    adam.validate()?;
    let mut model = init.clone();
    let mut params = model.flatten();
    let mut opt = Adam::new(adam, params.len());
    let mut trace = Vec::with_capacity(epochs + 1);
    let mut best: Option<BestIterate> = None;
    for epoch in 0..=epochs {
        model.set_params(&params)?;
        let (value, grad) = if epoch < epochs {
            model.loss_and_grad(x, loss)?
        } else {
            (model.loss(x, loss)?, Vec::new())
        };
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(value);
        match best.as_mut() {
            Some(b) => b.offer(value, &params),
            None => best = Some(BestIterate::new(value, &params)),
        }
        if epoch < epochs {
            opt.step(&mut params, &grad);
        }
    }
    model.set_params(&best.expect("at least one evaluation").params)?;
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{finite_diff_grad, gaussian_matrix, max_abs_diff, sample_variance};

    fn toy(rng: &mut RngStream, activation: Activation) -> MlpModel {
        let mut m = init_mlp_with(&[3, 4, 2], activation, rng).unwrap();
        let mut p = m.flatten();
        for v in &mut p {
            *v += 0.1 * rng.standard_normal();
        }
        m.set_params(&p).unwrap();
        m
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = MlpModel::new(
            vec![Matrix::zeros(5, 3), Matrix::zeros(1, 5)],
            vec![vec![0.0; 5], vec![0.0]],
            Activation::Relu,
        )
        .unwrap();
        let x = gaussian_matrix(&mut RngStream::new(0, 0), 4, 3, 0.0, 1.0).unwrap();
        assert!(m.predict(&x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kaiming_variance() {
        let m = init_mlp(&[1000, 1000], &mut RngStream::new(4, 0)).unwrap();
        let var = sample_variance(m.layer_weights[0].as_slice());
        assert!((var / 0.002 - 1.0).abs() < 0.1, "{var}");
        assert!(m.layer_biases[0].iter().all(|&b| b == 0.0));
        assert_eq!(m, init_mlp(&[1000, 1000], &mut RngStream::new(4, 0)).unwrap());
    }

    #[test]
    fn architecture_errors() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(init_mlp(&[3], &mut rng).unwrap_err(), Error::EmptyArchitecture);
        assert_eq!(init_mlp(&[], &mut rng).unwrap_err(), Error::EmptyArchitecture);
    }

    #[test]
    fn perturbation_rules() {
        let mut rng = RngStream::new(1, 0);
        let m = init_mlp(&[4, 3, 1], &mut rng).unwrap();
        assert_eq!(perturb_parameters(&m, 0.0, &mut rng).unwrap(), m);
        assert_eq!(perturb_parameters(&m, -0.1, &mut rng).unwrap_err(), Error::NegativeStd(-0.1));

        let zero = MlpModel::new(vec![Matrix::zeros(2, 2)], vec![vec![0.5, 0.5]], Activation::Relu).unwrap();
        assert_eq!(perturb_parameters(&zero, 0.3, &mut rng).unwrap(), zero);

        let ones = MlpModel::new(vec![Matrix::filled(100, 1000, 1.0)], vec![vec![1.0; 100]], Activation::Relu).unwrap();
        let p = perturb_parameters(&ones, 0.1, &mut rng).unwrap();
        let sd = sample_variance(p.layer_weights[0].as_slice()).sqrt();
        assert!((sd / 0.1 - 1.0).abs() < 0.05, "{sd}");
        assert_eq!(p.layer_biases, ones.layer_biases);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(21, 0);
        let x = gaussian_matrix(&mut rng, 6, 3, 0.0, 1.0).unwrap();
        let labels = [0, 1, 1, 0, 1, 0];
        for activation in [Activation::Relu, Activation::Tanh] {
            let m = toy(&mut rng, activation);
            let (_, g) = m.loss_and_grad(&x, MlpLoss::CrossEntropy(&labels)).unwrap();
            let fd = finite_diff_grad(
                |p| {
                    let mut probe = m.clone();
                    probe.set_params(p).unwrap();
                    probe.loss(&x, MlpLoss::CrossEntropy(&labels)).unwrap()
                },
                &m.flatten(),
                1e-6,
            )
            .unwrap();
            assert!(max_abs_diff(&g, &fd) < 1e-4);
        }
    }

    #[test]
    fn learns_zero_targets() {
        let mut rng = RngStream::new(3, 0);
        let x = gaussian_matrix(&mut rng, 50, 4, 0.0, 1.0).unwrap();
        let init = init_mlp(&[4, 16, 1], &mut rng).unwrap();
        let trained = train_mlp(&init, &x, &[0.0; 50], 500, 0.01).unwrap();
        assert!(trained.loss(&x, MlpLoss::Mse(&[0.0; 50])).unwrap() < 1e-3);
    }

    #[test]
    fn never_worse_than_init() {
        let mut rng = RngStream::new(8, 0);
        let x = gaussian_matrix(&mut rng, 20, 2, 0.0, 1.0).unwrap();
        let y: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let init = init_mlp(&[2, 8, 1], &mut rng).unwrap();
        let before = init.loss(&x, MlpLoss::Mse(&y)).unwrap();
        // A huge step size makes Adam oscillate.
        let trained = train_mlp(&init, &x, &y, 20, 5.0).unwrap();
        assert!(trained.loss(&x, MlpLoss::Mse(&y)).unwrap() <= before);
    }

    #[test]
    fn rejects_mismatched_targets() {
        let mut rng = RngStream::new(0, 0);
        let init = init_mlp(&[2, 3, 1], &mut rng).unwrap();
        assert!(train_mlp(&init, &Matrix::zeros(4, 2), &[0.0; 3], 5, 0.01).is_err());
        assert!(train_mlp(&init, &Matrix::zeros(4, 3), &[0.0; 4], 5, 0.01).is_err());
    }
}
