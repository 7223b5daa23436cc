//! Named experiment runners.
//!
//! Every runner derives its random streams from the master seed alone:
//! data from `mix_seed(seed, DATA_STREAM)` and sweep point `i` from
//! `mix_seed(seed, SWEEP_BASE + i)`. Sweep points run in order; ensembles
//! inside a point are reduced in student order, so reports do not depend on
//! the thread count.

pub mod bootstrap_sweep;
pub mod entropy_compare;
pub mod init_noise;
pub mod sequence_noise;
pub mod sequence_suppression;
pub mod teacher_noise;
pub mod variance_aware;

use std::path::{Path, PathBuf};

use kdlab_core::distillation::{MlpRecipe, Student, StudentTrainer};
use kdlab_core::models::{init_mlp_with, train_mlp_with, LinearModel, MlpLoss};
use kdlab_core::numkit::{mean, mix_seed, sample_variance, AdamConfig, Matrix, RngStream};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{load_config, parse_config, ConfigFile, MlpSettings, ModelFamily, Scale};
use crate::error::{Context, Result};
use crate::report::{Cell, Report, RowSink};

pub const DATA_STREAM: u64 = 0xDA7A;
pub const MODEL_STREAM: u64 = 0x30DE1;
pub const SWEEP_BASE: u64 = 1 << 32;

pub fn data_seed(master: u64) -> u64 {
    mix_seed(master, DATA_STREAM)
}

pub fn sweep_seed(master: u64, point: usize) -> u64 {
    mix_seed(master, SWEEP_BASE + point as u64)
}

/// Per-run inputs shared by all experiments.
pub struct RunContext<'a> {
    pub seed: u64,
    pub scale: Scale,
    pub sink: &'a mut dyn RowSink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentKind {
    TeacherNoiseSweep,
    InitNoiseSweep,
    BootstrapSweep,
    EntropyCompare,
    VarianceAwareSweep,
    SequenceSuppression,
    SequenceNoise,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::TeacherNoiseSweep,
        ExperimentKind::InitNoiseSweep,
        ExperimentKind::BootstrapSweep,
        ExperimentKind::EntropyCompare,
        ExperimentKind::VarianceAwareSweep,
        ExperimentKind::SequenceSuppression,
        ExperimentKind::SequenceNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TeacherNoiseSweep => teacher_noise::NAME,
            ExperimentKind::InitNoiseSweep => init_noise::NAME,
            ExperimentKind::BootstrapSweep => bootstrap_sweep::NAME,
            ExperimentKind::EntropyCompare => entropy_compare::NAME,
            ExperimentKind::VarianceAwareSweep => variance_aware::NAME,
            ExperimentKind::SequenceSuppression => sequence_suppression::NAME,
            ExperimentKind::SequenceNoise => sequence_noise::NAME,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Parameters of one named experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentConfig {
    TeacherNoiseSweep(teacher_noise::Params),
    InitNoiseSweep(init_noise::Params),
    BootstrapSweep(bootstrap_sweep::Params),
    EntropyCompare(entropy_compare::Params),
    VarianceAwareSweep(variance_aware::Params),
    SequenceSuppression(sequence_suppression::Params),
    SequenceNoise(sequence_noise::Params),
}

/// A parsed configuration file with its experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub experiment: ExperimentConfig,
}

fn lift<P>(file: ConfigFile<P>, wrap: fn(P) -> ExperimentConfig) -> LoadedConfig {
    LoadedConfig {
        master_seed: file.master_seed,
        output_dir: file.output_dir,
        experiment: wrap(file.params),
    }
}

fn typed<P: DeserializeOwned + Default>(kind: ExperimentKind, source: Source<'_>) -> Result<ConfigFile<P>> {
    match source {
        Source::File(path) => load_config(path, kind.name()),
        Source::Text(text) => parse_config(text, kind.name()),
    }
}

enum Source<'a> {
    File(Option<&'a Path>),
    Text(&'a str),
}

fn load(kind: ExperimentKind, source: Source<'_>) -> Result<LoadedConfig> {
    use ExperimentConfig as C;
    Ok(match kind {
        ExperimentKind::TeacherNoiseSweep => lift(typed(kind, source)?, C::TeacherNoiseSweep),
        ExperimentKind::InitNoiseSweep => lift(typed(kind, source)?, C::InitNoiseSweep),
        ExperimentKind::BootstrapSweep => lift(typed(kind, source)?, C::BootstrapSweep),
        ExperimentKind::EntropyCompare => lift(typed(kind, source)?, C::EntropyCompare),
        ExperimentKind::VarianceAwareSweep => lift(typed(kind, source)?, C::VarianceAwareSweep),
        ExperimentKind::SequenceSuppression => lift(typed(kind, source)?, C::SequenceSuppression),
        ExperimentKind::SequenceNoise => lift(typed(kind, source)?, C::SequenceNoise),
    })
}

/// Reads a configuration file, or uses defaults when `path` is `None`.
pub fn load_experiment(kind: ExperimentKind, path: Option<&Path>) -> Result<LoadedConfig> {
    load(kind, Source::File(path))
}

pub fn parse_experiment(kind: ExperimentKind, text: &str) -> Result<LoadedConfig> {
    load(kind, Source::Text(text))
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::TeacherNoiseSweep => Self::TeacherNoiseSweep(Default::default()),
            ExperimentKind::InitNoiseSweep => Self::InitNoiseSweep(Default::default()),
            ExperimentKind::BootstrapSweep => Self::BootstrapSweep(Default::default()),
            ExperimentKind::EntropyCompare => Self::EntropyCompare(Default::default()),
            ExperimentKind::VarianceAwareSweep => Self::VarianceAwareSweep(Default::default()),
            ExperimentKind::SequenceSuppression => Self::SequenceSuppression(Default::default()),
            ExperimentKind::SequenceNoise => Self::SequenceNoise(Default::default()),
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            Self::TeacherNoiseSweep(_) => ExperimentKind::TeacherNoiseSweep,
            Self::InitNoiseSweep(_) => ExperimentKind::InitNoiseSweep,
            Self::BootstrapSweep(_) => ExperimentKind::BootstrapSweep,
            Self::EntropyCompare(_) => ExperimentKind::EntropyCompare,
            Self::VarianceAwareSweep(_) => ExperimentKind::VarianceAwareSweep,
            Self::SequenceSuppression(_) => ExperimentKind::SequenceSuppression,
            Self::SequenceNoise(_) => ExperimentKind::SequenceNoise,
        }
    }
}

/// Runs the experiment, streaming rows into `ctx.sink`.
pub fn run_experiment(config: &ExperimentConfig, ctx: RunContext<'_>) -> Result<Report> {
    match config {
        ExperimentConfig::TeacherNoiseSweep(p) => teacher_noise::run(p, ctx),
        ExperimentConfig::InitNoiseSweep(p) => init_noise::run(p, ctx),
        ExperimentConfig::BootstrapSweep(p) => bootstrap_sweep::run(p, ctx),
        ExperimentConfig::EntropyCompare(p) => entropy_compare::run(p, ctx),
        ExperimentConfig::VarianceAwareSweep(p) => variance_aware::run(p, ctx),
        ExperimentConfig::SequenceSuppression(p) => sequence_suppression::run(p, ctx),
        ExperimentConfig::SequenceNoise(p) => sequence_noise::run(p, ctx),
    }
}

/// Config echo: the parameters plus resolved values.
pub(crate) fn echo(params: &impl Serialize, resolved: &[(&str, serde_json::Value)]) -> serde_json::Value {
    let mut v = serde_json::json!({ "params": params });
    for (k, val) in resolved {
        v[*k] = val.clone();
    }
    v
}

pub(crate) fn num(v: f64) -> Cell {
    Cell::Num(v)
}

pub(crate) fn opt(v: Option<f64>) -> Cell {
    v.map_or(Cell::Missing, Cell::Num)
}

/// Mean and standard error of the mean.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let se = if values.len() > 1 {
        (sample_variance(values) / values.len() as f64).sqrt()
    } else {
        0.0
    };
    (mean(values), se)
}

/// Least-squares line through `(x, y)` with `R²` as squared correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub(crate) fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Number of adjacent pairs where the series increases.
pub(crate) fn increases(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Fits a regression teacher on the training split: least squares or a
/// one-hidden-layer network from a seeded initialization.
pub(crate) fn fit_regression_teacher(
    family: ModelFamily,
    settings: &MlpSettings,
    x: &Matrix,
    y: &[f64],
    seed: u64,
) -> Result<Student> {
    match family {
        ModelFamily::Linear => Ok(Student::Linear(LinearModel::fit(x, y).at(|| "teacher fit".into())?)),
        ModelFamily::Mlp => {
            let mut rng = RngStream::new(mix_seed(seed, MODEL_STREAM), 0);
            let init = init_mlp_with(&[x.cols(), settings.hidden, 1], settings.activation, &mut rng)
                .at(|| "teacher initialization".into())?;
            let (model, _) =
                train_mlp_with(&init, x, MlpLoss::Mse(y), settings.epochs, AdamConfig::with_lr(settings.lr))
                    .at(|| "teacher training".into())?;
            Ok(Student::Mlp(model))
        }
    }
}

/// Student trainer whose network students share one seeded Kaiming
/// initialization, perturbed per student by `init_sigma`.
pub(crate) fn student_trainer(
    family: ModelFamily,
    settings: &MlpSettings,
    input_dim: usize,
    init_sigma: f64,
    seed: u64,
) -> Result<StudentTrainer> {
    match family {
        ModelFamily::Linear => Ok(StudentTrainer::Linear),
        ModelFamily::Mlp => {
            let mut rng = RngStream::new(mix_seed(seed, MODEL_STREAM), 1);
            let init = init_mlp_with(&[input_dim, settings.hidden, 1], settings.activation, &mut rng)
                .at(|| "student initialization".into())?;
            Ok(StudentTrainer::Mlp(MlpRecipe {
                init,
                epochs: settings.epochs,
                adam: AdamConfig::with_lr(settings.lr),
                init_sigma,
            }))
        }
    }
}

/// Shannon entropy in nats of a probability vector.
pub(crate) fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_exact() {
        let f = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert_eq!((f.slope, f.intercept, f.r_squared), (2.0, 1.0, 1.0));
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::from_name(k.name()), Some(k));
            assert_eq!(ExperimentConfig::defaults(k).kind(), k);
        }
    }

    #[test]
    fn entropy_of_uniform() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }
}
