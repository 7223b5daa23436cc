use rayon::prelude::*;

use super::{
    build_targets, collect_in_order, student_stream, Method, StrategyConfig, StudentEnsemble, StudentStats,
    AUXILIARY_STREAM_BASE, STUDENT_CHILD, TEACHER_CHILD,
};
use crate::error::Result;
use crate::models::{perturb_parameters, teacher_respond, train_mlp_with, LinearModel, MlpLoss, MlpModel, Regressor};
use crate::numkit::{mean, sample_variance, AdamConfig, LeastSquares, Matrix, RngStream};

/// Size of the single-response ensemble that supplies student statistics
/// for variance-weighted regression targets.
pub const PRELIMINARY_STUDENTS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Student {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl Regressor for Student {
    fn input_dim(&self) -> usize {
        match self {
            Student::Linear(m) => m.input_dim(),
            Student::Mlp(m) => m.input_dim(),
        }
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Student::Linear(m) => m.predict(x),
            Student::Mlp(m) => m.predict(x),
        }
    }
}

/// Neural student recipe. Every student starts from `init`, multiplied by
/// `(1 + ε)` weight noise of scale `init_sigma` drawn from its own stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpRecipe {
    pub init: MlpModel,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub init_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudentTrainer {
    /// Ordinary least squares on the targets.
    Linear,
    Mlp(MlpRecipe),
}

impl StudentTrainer {
    /// Fits one student; `rng` feeds initialization noise only.
    pub fn fit(&self, x: &Matrix, targets: &[f64], rng: &mut RngStream) -> Result<(Student, Vec<f64>)> {
        match self {
            StudentTrainer::Linear => Ok((Student::Linear(LinearModel::fit(x, targets)?), Vec::new())),
            StudentTrainer::Mlp(recipe) => fit_mlp(recipe, x, targets, rng),
        }
    }

    fn fit_factored(
        &self,
        ls: Option<&LeastSquares>,
        x: &Matrix,
        targets: &[f64],
        rng: &mut RngStream,
    ) -> Result<(Student, Vec<f64>)> {
        match (self, ls) {
            (StudentTrainer::Linear, Some(ls)) => Ok((Student::Linear(LinearModel::new(ls.solve(targets)?)), Vec::new())),
            _ => self.fit(x, targets, rng),
        }
    }
}

fn fit_mlp(recipe: &MlpRecipe, x: &Matrix, targets: &[f64], rng: &mut RngStream) -> Result<(Student, Vec<f64>)> {
    let init = perturb_parameters(&recipe.init, recipe.init_sigma, rng)?;
    let (model, trace) = train_mlp_with(&init, x, MlpLoss::Mse(targets), recipe.epochs, recipe.adam)?;
    Ok((Student::Mlp(model), trace))
}

/// Student, loss trace, test predictions and count of degenerate targets.
type FittedStudent = (Student, Vec<f64>, Vec<f64>, usize);

/// Distills `strategy.students` students from fresh teacher responses with
/// noise standard deviation `sigma_t`, and predicts on `x_test`.
pub fn distill_ensemble<T: Regressor + ?Sized>(
    teacher: &T,
    x_train: &Matrix,
    x_test: &Matrix,
    sigma_t: f64,
    strategy: &StrategyConfig,
    trainer: &StudentTrainer,
    master_seed: u64,
) -> Result<StudentEnsemble<Student>> {
    strategy.validate()?;
    let ls = match trainer {
        StudentTrainer::Linear => Some(LeastSquares::new(x_train)?),
        StudentTrainer::Mlp(_) => None,
    };
    let stats = if strategy.method == Method::VarianceWeighted {
        Some(preliminary_stats(teacher, x_train, sigma_t, trainer, ls.as_ref(), master_seed)?)
    } else {
        None
    };
    let k = strategy.responses_drawn();

    let results: Vec<Result<FittedStudent>> = (0..strategy.students)
        .into_par_iter()
        .map(|j| {
            let stream = student_stream(master_seed, j);
            let samples = teacher_respond(teacher, x_train, sigma_t, k, &mut stream.child(TEACHER_CHILD))?;
            let targets = build_targets(&samples, strategy.method, stats.as_ref())?;
            let (student, trace) =
                trainer.fit_factored(ls.as_ref(), x_train, &targets.targets, &mut stream.child(STUDENT_CHILD))?;
            let preds = student.predict(x_test)?;
            Ok((student, trace, preds, targets.degenerate_inputs.len()))
        })
        .collect();
    let fitted = collect_in_order(results)?;

    let mut predictions = Matrix::zeros(fitted.len(), x_test.rows());
    let mut students = Vec::with_capacity(fitted.len());
    let mut loss_traces = Vec::with_capacity(fitted.len());
    let mut degenerate = 0;
    for (j, (student, trace, preds, deg)) in fitted.into_iter().enumerate() {
        predictions.row_mut(j).copy_from_slice(&preds);
        students.push(student);
        loss_traces.push(trace);
        degenerate += deg;
    }
    let mut warnings = Vec::new();
    if degenerate > 0 {
        warnings.push(format!(
            "{degenerate} targets had zero teacher and student variance; equal weights used"
        ));
    }
    Ok(StudentEnsemble {
        students,
        stream_ids: (0..strategy.students as u64).collect(),
        predictions: Some(predictions),
        loss_traces,
        warnings,
    })
}

/// Mean and sample variance of single-response students' training-input
/// predictions over a preliminary ensemble.
fn preliminary_stats<T: Regressor + ?Sized>(
    teacher: &T,
    x_train: &Matrix,
    sigma_t: f64,
    trainer: &StudentTrainer,
    ls: Option<&LeastSquares>,
    master_seed: u64,
) -> Result<StudentStats> {
    let results: Vec<Result<Vec<f64>>> = (0..PRELIMINARY_STUDENTS)
        .into_par_iter()
        .map(|i| {
            let stream = RngStream::new(master_seed, AUXILIARY_STREAM_BASE + i as u64);
            let samples = teacher_respond(teacher, x_train, sigma_t, 1, &mut stream.child(TEACHER_CHILD))?;
            let (student, _) = trainer.fit_factored(ls, x_train, &samples.column(0), &mut stream.child(STUDENT_CHILD))?;
            student.predict(x_train)
        })
        .collect();
    let preds = collect_in_order(results)?;
    let n = x_train.rows();
    let mut stats = StudentStats {
        mean: Vec::with_capacity(n),
        variance: Vec::with_capacity(n),
    };
    for i in 0..n {
        let col: Vec<f64> = preds.iter().map(|p| p[i]).collect();
        stats.mean.push(mean(&col));
        stats.variance.push(sample_variance(&col));
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gaussian_matrix;
    use crate::uncertainty::inter_student_variance;

    fn setup() -> (LinearModel, Matrix, Matrix) {
        let mut rng = RngStream::new(100, 0);
        let x = gaussian_matrix(&mut rng, 40, 3, 0.0, 1.0).unwrap();
        let xt = gaussian_matrix(&mut rng, 10, 3, 0.0, 1.0).unwrap();
        (LinearModel::new(vec![1.0, -0.5, 2.0]), x, xt)
    }

    #[test]
    fn noiseless_students_agree() {
        let (teacher, x, xt) = setup();
        let s = StrategyConfig::new(Method::SingleResponse, 1, 5);
        let e = distill_ensemble(&teacher, &x, &xt, 0.0, &s, &StudentTrainer::Linear, 1).unwrap();
        assert!(inter_student_variance(e.predictions.as_ref().unwrap()).unwrap() < 1e-20);
    }

    #[test]
    fn repeatable() {
        let (teacher, x, xt) = setup();
        for method in [Method::SingleResponse, Method::Averaging, Method::VarianceWeighted] {
            let s = StrategyConfig::new(method, 3, 2);
            let a = distill_ensemble(&teacher, &x, &xt, 1.0, &s, &StudentTrainer::Linear, 7).unwrap();
            let b = distill_ensemble(&teacher, &x, &xt, 1.0, &s, &StudentTrainer::Linear, 7).unwrap();
            assert_eq!(a.predictions, b.predictions);
            assert_eq!(a.students, b.students);
        }
    }

    #[test]
    fn failing_student_is_named() {
        let (teacher, _, xt) = setup();
        let thin = Matrix::zeros(2, 3);
        let s = StrategyConfig::new(Method::SingleResponse, 1, 2);
        let recipe = MlpRecipe {
            init: crate::models::init_mlp(&[3, 2, 1], &mut RngStream::new(0, 0)).unwrap(),
            epochs: 0,
            adam: AdamConfig::default(),
            init_sigma: 0.0,
        };
        let err = distill_ensemble(&teacher, &thin, &xt, 1.0, &s, &StudentTrainer::Mlp(recipe), 0).unwrap_err();
        assert!(matches!(err, crate::Error::StudentFailed { index: 0, .. }));
    }
}
