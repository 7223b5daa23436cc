//! JSON configuration files and the data sources they name.
//!
//! A configuration file has the shape
//! `{"experiment": ..., "master_seed": ..., "output_dir": ..., "params": {...}}`.
//! Every key is optional and unknown keys are rejected.

use std::path::{Path, PathBuf};

use kdlab_core::models::{Activation, LinearModel, Regressor};
use kdlab_core::numkit::{sample_variance, Matrix, RngStream};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset_csv, synth_classification, synth_regression_split, Dataset, DatasetKind};
use crate::error::{CliError, Result};

/// Ensemble size used when neither the config nor `--paper-scale` sets one.
pub const DESK_ENSEMBLE: usize = 200;
/// Ensemble size restored by `--paper-scale`.
pub const PAPER_ENSEMBLE: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "P: Deserialize<'de> + Default"))]
pub struct ConfigFile<P> {
    #[serde(default)]
    pub experiment: Option<String>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: P,
}

impl<P: Default> Default for ConfigFile<P> {
    fn default() -> Self {
        Self {
            experiment: None,
            master_seed: None,
            output_dir: None,
            params: P::default(),
        }
    }
}

/// Parses a configuration document, rejecting a mismatched experiment name.
pub fn parse_config<P: DeserializeOwned + Default>(text: &str, experiment: &str) -> Result<ConfigFile<P>> {
    let config: ConfigFile<P> = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    match &config.experiment {
        Some(name) if name != experiment => Err(CliError::Config(format!(
            "config is for experiment `{name}`, not `{experiment}`"
        ))),
        _ => Ok(config),
    }
}

/// Reads `path`, or returns the all-defaults configuration when absent.
pub fn load_config<P: DeserializeOwned + Default>(path: Option<&Path>, experiment: &str) -> Result<ConfigFile<P>> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            parse_config(&text, experiment)
        }
    }
}

/// Resolves ensemble sizes: an explicit value wins, then the scale flag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Scale {
    pub paper: bool,
}

impl Scale {
    pub fn ensemble(self, explicit: Option<usize>) -> usize {
        explicit.unwrap_or(if self.paper { PAPER_ENSEMBLE } else { DESK_ENSEMBLE })
    }
}

pub(crate) fn require(condition: bool, message: impl FnOnce() -> String) -> Result<()> {
    if condition {
        Ok(())
    } else {
        Err(CliError::Config(message()))
    }
}

pub(crate) fn require_grid(name: &str, grid: &[f64], valid: impl Fn(f64) -> bool) -> Result<()> {
    require(!grid.is_empty(), || format!("{name} must not be empty"))?;
    match grid.iter().find(|&&v| !valid(v)) {
        Some(v) => Err(CliError::Config(format!("{name} contains invalid value {v}"))),
        None => Ok(()),
    }
}

/// `start, start + step, ...` up to `end` inclusive, rounded to 12 digits.
pub fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect()
}

/// One-hidden-layer network shape and its training schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSettings {
    pub hidden: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub lr: f64,
}

impl MlpSettings {
    pub fn with_hidden(hidden: usize) -> Self {
        Self {
            hidden,
            ..Self::default()
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        require(self.hidden > 0, || format!("{what}: hidden width must be positive"))?;
        require(self.epochs > 0, || format!("{what}: epochs must be positive"))?;
        require(self.lr > 0.0 && self.lr.is_finite(), || format!("{what}: learning rate must be positive"))
    }
}

impl Default for MlpSettings {
    fn default() -> Self {
        Self {
            hidden: 64,
            activation: Activation::Relu,
            epochs: 300,
            lr: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Linear,
    Mlp,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Mlp => "mlp",
        }
    }
}

/// Synthetic linear-Gaussian regression. Without `theta_star` the
/// coefficients are drawn i.i.d. standard normal from the data seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticRegression {
    pub n_train: usize,
    pub n_test: usize,
    pub d: usize,
    pub sigma_eta: f64,
    pub theta_star: Option<Vec<f64>>,
}

impl Default for SyntheticRegression {
    fn default() -> Self {
        Self {
            n_train: 100,
            n_test: 1000,
            d: 5,
            sigma_eta: 0.5,
            theta_star: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: f64,
}

fn default_split_ratio() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum RegressionData {
    Synthetic(SyntheticRegression),
    Csv(CsvSource),
}

impl Default for RegressionData {
    fn default() -> Self {
        RegressionData::Synthetic(SyntheticRegression::default())
    }
}

/// Train/test regression data plus whatever is known about its generator.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub x_train: Matrix,
    pub x_test: Matrix,
    pub y_train: Vec<f64>,
    pub y_test: Vec<f64>,
    pub theta_star: Option<Vec<f64>>,
    pub sigma_eta: Option<f64>,
}

impl RegressionProblem {
    /// Noise-free test targets `X_test θ*`, when the generator is known.
    pub fn test_signal(&self) -> Option<Vec<f64>> {
        let theta = self.theta_star.as_ref()?;
        Some(self.x_test.matvec(theta).expect("theta matches the feature count"))
    }

    /// Reference test targets for truth-based losses: a fresh noise draw
    /// from `rng` for synthetic data, the held-out targets otherwise.
    pub fn truth_draw(&self, rng: &mut RngStream) -> Vec<f64> {
        match (self.test_signal(), self.sigma_eta) {
            (Some(signal), Some(sigma)) => signal.into_iter().map(|v| v + sigma * rng.standard_normal()).collect(),
            _ => self.y_test.clone(),
        }
    }

    /// Label noise variance: known for synthetic data, otherwise the
    /// least-squares residual variance `RSS / (n - d)`.
    pub fn noise_variance(&self) -> Result<f64> {
        if let Some(s) = self.sigma_eta {
            return Ok(s * s);
        }
        let (n, d) = self.x_train.shape();
        Ok(self.residual_sum_of_squares()? / (n - d) as f64)
    }

    /// `RSS/n` of the least-squares fit: the noise variance of the empirical
    /// distribution that resampling draws from.
    pub fn empirical_noise_variance(&self) -> Result<f64> {
        Ok(self.residual_sum_of_squares()? / self.x_train.rows() as f64)
    }

    fn residual_sum_of_squares(&self) -> Result<f64> {
        let fit = LinearModel::fit(&self.x_train, &self.y_train).map_err(|e| CliError::Numerical {
            context: "residual variance".into(),
            source: e,
        })?;
        let pred = fit.predict(&self.x_train).expect("fitted on this design");
        Ok(pred.iter().zip(&self.y_train).map(|(p, y)| (p - y) * (p - y)).sum())
    }

    /// Sample variance of the training targets, the scale behind `α`.
    pub fn target_variance(&self) -> f64 {
        sample_variance(&self.y_train)
    }
}

impl RegressionData {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegressionData::Synthetic(s) => {
                require(s.d > 0 && s.n_train > s.d, || {
                    format!("need more training rows than features ({} <= {})", s.n_train, s.d)
                })?;
                require(s.n_test > 0, || "test set must not be empty".into())?;
                require(s.sigma_eta >= 0.0 && s.sigma_eta.is_finite(), || {
                    "sigma_eta must be non-negative".into()
                })?;
                if let Some(t) = &s.theta_star {
                    require(t.len() == s.d, || format!("theta_star has {} entries, expected {}", t.len(), s.d))?;
                }
                Ok(())
            }
            RegressionData::Csv(c) => require(c.split_ratio > 0.0 && c.split_ratio < 1.0, || {
                "split_ratio must lie in (0, 1)".into()
            }),
        }
    }

    pub fn load(&self, seed: u64) -> Result<RegressionProblem> {
        match self {
            RegressionData::Synthetic(s) => {
                let theta = s.theta_star.clone().unwrap_or_else(|| {
                    let mut rng = RngStream::new(seed, 0);
                    (0..s.d).map(|_| rng.standard_normal()).collect()
                });
                let ds = synth_regression_split(s.n_train, s.n_test, s.d, &theta, s.sigma_eta, seed)?;
                Ok(problem_from(&ds, Some(theta), Some(s.sigma_eta)))
            }
            RegressionData::Csv(c) => {
                let ds = load_dataset_csv(&c.path, DatasetKind::Regression, c.split_ratio, seed)?;
                Ok(problem_from(&ds, None, None))
            }
        }
    }
}

fn problem_from(ds: &Dataset, theta_star: Option<Vec<f64>>, sigma_eta: Option<f64>) -> RegressionProblem {
    RegressionProblem {
        x_train: ds.x_train(),
        x_test: ds.x_test(),
        y_train: ds.y_train(),
        y_test: ds.y_test(),
        theta_star,
        sigma_eta,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticClassification {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub separation: f64,
}

impl Default for SyntheticClassification {
    fn default() -> Self {
        Self {
            n: 5000,
            d: 4,
            classes: 3,
            separation: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ClassificationData {
    Synthetic(SyntheticClassification),
    Csv(CsvSource),
}

impl Default for ClassificationData {
    fn default() -> Self {
        ClassificationData::Synthetic(SyntheticClassification::default())
    }
}

impl ClassificationData {
    pub fn validate(&self) -> Result<()> {
        match self {
            ClassificationData::Synthetic(s) => {
                require(s.classes >= 2, || "need at least two classes".into())?;
                require(s.d > 0 && s.n >= 2 * s.classes, || "too few rows or features".into())?;
                require(s.separation >= 0.0 && s.separation.is_finite(), || {
                    "separation must be non-negative".into()
                })
            }
            ClassificationData::Csv(c) => require(c.split_ratio > 0.0 && c.split_ratio < 1.0, || {
                "split_ratio must lie in (0, 1)".into()
            }),
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset> {
        Ok(match self {
            ClassificationData::Synthetic(s) => synth_classification(s.n, s.d, s.classes, s.separation, seed)?,
            ClassificationData::Csv(c) => load_dataset_csv(&c.path, DatasetKind::Classification, c.split_ratio, seed)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    struct Params {
        width: usize,
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config::<Params>(r#"{"params": {"width": 3}}"#, "x").is_ok());
        assert!(parse_config::<Params>(r#"{"params": {"wdth": 3}}"#, "x").is_err());
        assert!(parse_config::<Params>(r#"{"colour": 1}"#, "x").is_err());
        let err = parse_config::<Params>(r#"{"experiment": "y"}"#, "x").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn data_source_tagging() {
        let d: RegressionData = serde_json::from_str(r#"{"source": "synthetic", "n_train": 50}"#).unwrap();
        match d {
            RegressionData::Synthetic(s) => assert_eq!((s.n_train, s.d), (50, 5)),
            _ => panic!("wrong variant"),
        }
        assert!(serde_json::from_str::<RegressionData>(r#"{"source": "synthetic", "bogus": 1}"#).is_err());
        let c: RegressionData = serde_json::from_str(r#"{"source": "csv", "path": "a.csv"}"#).unwrap();
        assert_eq!(c, RegressionData::Csv(CsvSource { path: "a.csv".into(), split_ratio: 0.8 }));
    }

    #[test]
    fn grids_and_scale() {
        assert_eq!(grid(0.0, 2.0, 0.25).len(), 9);
        assert_eq!(grid(0.1, 1.0, 0.1), vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert_eq!(Scale { paper: false }.ensemble(None), 200);
        assert_eq!(Scale { paper: true }.ensemble(None), 1000);
        assert_eq!(Scale { paper: true }.ensemble(Some(7)), 7);
    }
}
