use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream};

/// Teacher output noise. Exactly one of `sigma_t` and `alpha` is set; with
/// `alpha` the noise variance is `alpha * Var(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub sigma_t: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "unit_temperature")]
    pub temperature: f64,
}

fn unit_temperature() -> f64 {
    1.0
}

impl NoiseSpec {
    pub fn sigma(sigma_t: f64) -> Self {
        Self {
            sigma_t: Some(sigma_t),
            alpha: None,
            temperature: 1.0,
        }
    }

    pub fn alpha(alpha: f64) -> Self {
        Self {
            sigma_t: None,
            alpha: Some(alpha),
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.sigma_t, self.alpha) {
            (Some(s), None) if s < 0.0 || !s.is_finite() => Err(Error::NegativeStd(s)),
            (None, Some(a)) if a < 0.0 || !a.is_finite() => {
                Err(Error::InvalidConfig(format!("noise fraction must be non-negative, got {a}")))
            }
            (Some(_), None) | (None, Some(_)) => {
                if self.temperature > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig("temperature must be positive".into()))
                }
            }
            _ => Err(Error::InvalidConfig(
                "exactly one of sigma_t and alpha must be set".into(),
            )),
        }
    }

    /// Teacher noise standard deviation given the target variance.
    pub fn resolve_sigma(&self, var_y: f64) -> Result<f64> {
        self.validate()?;
        Ok(match (self.sigma_t, self.alpha) {
            (Some(s), _) => s,
            (_, Some(a)) => (a * var_y).sqrt(),
            _ => unreachable!("validated above"),
        })
    }
}

/// `n x k` matrix whose column `j` holds `f_T(x_i) + ε_ij` with
/// `ε_ij ~ N(0, sigma_t²)`, drawn row by row.
pub fn teacher_respond<M: Regressor + ?Sized>(
    model: &M,
    x: &Matrix,
    sigma_t: f64,
    k: usize,
    rng: &mut RngStream,
) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::InsufficientSamples("k must be at least 1".into()));
    }
    if !(sigma_t >= 0.0) {
        return Err(Error::NegativeStd(sigma_t));
    }
    let mean = model.predict(x)?;
    let mut out = Matrix::zeros(x.rows(), k);
    for (i, &f) in mean.iter().enumerate() {
        for v in out.row_mut(i) {
            *v = if sigma_t == 0.0 { f } else { f + sigma_t * rng.standard_normal() };
        }
    }
    Ok(out)
}
