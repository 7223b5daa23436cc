use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam hyperparameters. `beta1`, `beta2` and `eps` default to the usual
/// 0.9 / 0.999 / 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig("Adam eps must be positive".into()));
        }
        Ok(())
    }
}

/// Bias-corrected Adam state for a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(config: AdamConfig, dim: usize) -> Self {
        Self {
            config,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Runs `steps` Adam updates from `init` using gradients from `grad_fn`.
pub fn adam_optimize<F>(mut grad_fn: F, init: &[f64], steps: usize, config: AdamConfig) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if steps == 0 {
        return Err(Error::InvalidConfig("Adam needs at least one step".into()));
    }
    config.validate()?;
    let mut params = init.to_vec();
    let mut adam = Adam::new(config, params.len());
    for step in 0..steps {
        let grad = grad_fn(&params);
        if grad.len() != params.len() {
            return Err(Error::dims(format!(
                "gradient length {} differs from parameter length {}",
                grad.len(),
                params.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { step });
        }
        adam.step(&mut params, &grad);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_bowl_converges_to_origin() {
        let theta = adam_optimize(
            |t| t.iter().map(|x| 2.0 * x).collect(),
            &[3.0, -2.0, 1.5],
            500,
            AdamConfig::with_lr(0.1),
        )
        .unwrap();
        let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "norm {norm}");
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let init = [1.0, -4.0, 0.25];
        let out = adam_optimize(|t| vec![0.0; t.len()], &init, 50, AdamConfig::with_lr(0.5)).unwrap();
        assert_eq!(out, init);
    }

    #[test]
    fn shifted_quadratic_finds_minimizer() {
        let out = adam_optimize(
            |t| vec![2.0 * (t[0] - 3.0)],
            &[0.0],
            1000,
            AdamConfig::with_lr(0.1),
        )
        .unwrap();
        assert!((out[0] - 3.0).abs() < 1e-4, "{}", out[0]);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let err = adam_optimize(|_| vec![f64::NAN], &[0.0], 5, AdamConfig::default()).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient { step: 0 });
    }

    #[test]
    fn bad_settings_are_rejected() {
        assert!(adam_optimize(|t| t.to_vec(), &[1.0], 0, AdamConfig::default()).is_err());
        assert!(adam_optimize(|t| t.to_vec(), &[1.0], 1, AdamConfig::with_lr(0.0)).is_err());
    }
}
