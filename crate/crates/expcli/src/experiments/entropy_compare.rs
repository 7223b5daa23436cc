//! Predictive entropy of a classifier teacher and a student trained on the
//! teacher's hard labels, split into all, correctly and incorrectly
//! classified test examples.

use kdlab_core::models::{init_mlp_with, predict_labels, train_logistic_with, train_mlp_with, Classifier, MlpLoss};
use kdlab_core::numkit::{mix_seed, AdamConfig, Matrix, RngStream};
use kdlab_core::uncertainty::{entropy_report, significance, EntropyGroup, EntropyReport};
use serde::{Deserialize, Serialize};

use super::{data_seed, echo, num, RunContext, MODEL_STREAM};
use crate::config::{require, ClassificationData, MlpSettings};
use crate::error::{Context, Result};
use crate::report::{Cell, Report, ReportBuilder};

pub const NAME: &str = "entropy-compare";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierFamily {
    Logistic,
    Mlp,
}

impl ClassifierFamily {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierFamily::Logistic => "logistic",
            ClassifierFamily::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub data: ClassificationData,
    pub families: Vec<ClassifierFamily>,
    pub logistic_epochs: usize,
    pub logistic_lr: f64,
    pub teacher_mlp: MlpSettings,
    pub student_mlp: MlpSettings,
    /// Largest accepted `|acc_T - acc_S|`.
    pub accuracy_gap: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            data: ClassificationData::default(),
            families: vec![ClassifierFamily::Logistic, ClassifierFamily::Mlp],
            logistic_epochs: 300,
            logistic_lr: 0.05,
            teacher_mlp: MlpSettings {
                lr: 0.01,
                ..MlpSettings::with_hidden(128)
            },
            student_mlp: MlpSettings::default(),
            accuracy_gap: 0.005,
        }
    }
}

impl Params {
    fn validate(&self) -> Result<()> {
        self.data.validate()?;
        require(!self.families.is_empty(), || "families must not be empty".into())?;
        require(self.logistic_epochs > 0 && self.logistic_lr > 0.0, || {
            "logistic schedule must be positive".into()
        })?;
        self.teacher_mlp.validate("teacher_mlp")?;
        self.student_mlp.validate("student_mlp")?;
        require(self.accuracy_gap >= 0.0, || "accuracy_gap must be non-negative".into())
    }
}

const COLUMNS: [&str; 8] = [
    "family",
    "model",
    "group",
    "count",
    "mean_entropy",
    "std_entropy",
    "accuracy",
    "significant",
];

fn group_name(g: EntropyGroup) -> &'static str {
    match g {
        EntropyGroup::All => "all",
        EntropyGroup::Correct => "correct",
        EntropyGroup::Incorrect => "incorrect",
    }
}

fn train(
    params: &Params,
    family: ClassifierFamily,
    settings: &MlpSettings,
    x: &Matrix,
    labels: &[usize],
    classes: usize,
    rng: &mut RngStream,
) -> kdlab_core::Result<Box<dyn Classifier>> {
    match family {
        ClassifierFamily::Logistic => {
            let (m, _) =
                train_logistic_with(x, labels, classes, params.logistic_epochs, AdamConfig::with_lr(params.logistic_lr))?;
            Ok(Box::new(m))
        }
        ClassifierFamily::Mlp => {
            let init = init_mlp_with(&[x.cols(), settings.hidden, classes], settings.activation, rng)?;
            let (m, _) =
                train_mlp_with(&init, x, MlpLoss::CrossEntropy(labels), settings.epochs, AdamConfig::with_lr(settings.lr))?;
            Ok(Box::new(m))
        }
    }
}

fn accuracy(model: &dyn Classifier, x: &Matrix, labels: &[usize]) -> kdlab_core::Result<f64> {
    let pred = predict_labels(model, x)?;
    Ok(pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64)
}

pub fn run(params: &Params, ctx: RunContext<'_>) -> Result<Report> {
    params.validate()?;
    let data = params.data.load(data_seed(ctx.seed))?;
    let (x_train, x_test) = (data.x_train(), data.x_test());
    let (y_train, y_test) = (data.labels_train(), data.labels_test());
    let classes = data.classes();

    let config = echo(params, &[("classes", classes.into())]);
    let mut out = ReportBuilder::new(NAME, ctx.seed, config, &COLUMNS, ctx.sink)?;
    for (fi, &family) in params.families.iter().enumerate() {
        let at = || format!("family {}", family.name());
        let rng = RngStream::new(mix_seed(ctx.seed, MODEL_STREAM), fi as u64);
        let teacher = train(params, family, &params.teacher_mlp, &x_train, &y_train, classes, &mut rng.child(0)).at(at)?;
        let hard = predict_labels(teacher.as_ref(), &x_train).at(at)?;
        let student = train(params, family, &params.student_mlp, &x_train, &hard, classes, &mut rng.child(1)).at(at)?;

        let acc_t = accuracy(teacher.as_ref(), &x_test, &y_test).at(at)?;
        let acc_s = accuracy(student.as_ref(), &x_test, &y_test).at(at)?;
        let rep_t = entropy_report(teacher.as_ref(), &x_test, &y_test).at(at)?;
        let rep_s = entropy_report(student.as_ref(), &x_test, &y_test).at(at)?;
        emit(&mut out, family, "teacher", &rep_t, acc_t, None)?;
        emit(&mut out, family, "student", &rep_s, acc_s, Some(&rep_t))?;

        let gap = (acc_t - acc_s).abs();
        out.assert(
            &format!("{}:accuracy_gap", family.name()),
            gap <= params.accuracy_gap + 1e-12,
            format!("teacher {acc_t:.4}, student {acc_s:.4}"),
        );
        let verdicts: Vec<Option<bool>> = rep_t.iter().zip(&rep_s).map(|(t, s)| significance(t, s)).collect();
        out.assert(
            &format!("{}:no_significance", family.name()),
            verdicts.iter().all(|v| *v != Some(true)),
            format!("per-group significance {verdicts:?}"),
        );
        out.summary(&format!("{}_undefined_groups", family.name()), verdicts.iter().filter(|v| v.is_none()).count());
    }
    Ok(out.finish())
}

fn emit(
    out: &mut ReportBuilder<'_>,
    family: ClassifierFamily,
    model: &str,
    reports: &[EntropyReport],
    acc: f64,
    reference: Option<&[EntropyReport]>,
) -> Result<()> {
    for (i, r) in reports.iter().enumerate() {
        let significant = match reference {
            None => Cell::Missing,
            Some(refs) => match significance(&refs[i], r) {
                None => Cell::Missing,
                Some(true) => Cell::text("yes"),
                Some(false) => Cell::text("no"),
            },
        };
        out.push_row(vec![
            Cell::text(family.name()),
            Cell::text(model),
            Cell::text(group_name(r.group)),
            Cell::count(r.count),
            num(r.mean_entropy),
            num(r.std_entropy),
            num(acc),
            significant,
        ])?;
    }
    Ok(())
}
