//! Bootstrap students over resample sizes `m = β n`, for the teacher-model
//! and ground-truth variants.
//!
//! Least-squares ground-truth rows carry the closed forms
//! `Var = (σ̂²/m) xᵀ Σ̂⁻¹ x` with `Σ̂ = XᵀX / n` and `σ̂² = RSS / n`, and
//! `MSE = σ² + σ² d / m` with the nominal noise variance `σ²`.
//! They are checked only for `β >= oracle_min_beta`, where the large-`m`
//! approximation behind them is adequate.

use kdlab_core::bootstrap::{predictive_variance, run_bootstrap, BootstrapConfig, BootstrapVariant};
use kdlab_core::distillation::Student;
use kdlab_core::models::{LinearModel, Regressor};
use kdlab_core::numkit::{mean, mix_seed, RngStream};
use kdlab_core::oracles::{bootstrap_mse, bootstrap_variance, second_moment};
use kdlab_core::uncertainty::eval_mse;
use serde::{Deserialize, Serialize};

use super::{data_seed, echo, fit_line, fit_regression_teacher, increases, num, opt, student_trainer, sweep_seed, RunContext};
use crate::config::{grid, require, require_grid, MlpSettings, ModelFamily, RegressionData, SyntheticRegression};
use crate::error::{Context, Result};
use crate::report::{relative_error, Cell, PlotSpec, Report, ReportBuilder};

pub const NAME: &str = "bootstrap-sweep";

const TRUTH_STREAM: u64 = 0x7207;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub data: RegressionData,
    pub beta_grid: Vec<f64>,
    /// Defaults to 1000: the pointwise variance check needs the Monte Carlo
    /// error per test point well under its tolerance. `null` defers to the
    /// run scale.
    pub replicates: Option<usize>,
    pub variants: Vec<BootstrapVariant>,
    pub teacher: ModelFamily,
    pub student: ModelFamily,
    pub teacher_mlp: MlpSettings,
    pub student_mlp: MlpSettings,
    pub variance_tolerance: f64,
    pub mse_tolerance: f64,
    pub oracle_min_beta: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            data: RegressionData::Synthetic(SyntheticRegression {
                n_train: 2000,
                n_test: 200,
                d: 5,
                sigma_eta: 1.0,
                theta_star: None,
            }),
            beta_grid: grid(0.1, 1.0, 0.1),
            replicates: Some(1000),
            variants: vec![BootstrapVariant::TeacherModel, BootstrapVariant::GroundTruth],
            teacher: ModelFamily::Linear,
            student: ModelFamily::Linear,
            teacher_mlp: MlpSettings::with_hidden(128),
            student_mlp: MlpSettings::default(),
            variance_tolerance: 0.2,
            mse_tolerance: 0.1,
            oracle_min_beta: 0.3,
        }
    }
}

impl Params {
    fn validate(&self) -> Result<()> {
        self.data.validate()?;
        require_grid("beta_grid", &self.beta_grid, |b| b > 0.0 && b <= 1.0)?;
        require(!self.variants.is_empty(), || "variants must not be empty".into())?;
        self.teacher_mlp.validate("teacher_mlp")?;
        self.student_mlp.validate("student_mlp")?;
        require(self.variance_tolerance > 0.0 && self.mse_tolerance > 0.0, || {
            "tolerances must be positive".into()
        })
    }
}

const COLUMNS: [&str; 12] = [
    "variant",
    "beta",
    "m",
    "pred_var_mean",
    "pred_var_oracle",
    "pred_var_rel_err",
    "pred_var_max_point_rel_err",
    "test_mse",
    "test_mse_oracle",
    "test_mse_rel_err",
    "max_param_deviation",
    "retried",
];

fn variant_name(v: BootstrapVariant) -> &'static str {
    match v {
        BootstrapVariant::TeacherModel => "teacher_model",
        BootstrapVariant::GroundTruth => "ground_truth",
    }
}

pub fn run(params: &Params, ctx: RunContext<'_>) -> Result<Report> {
    params.validate()?;
    let replicates = ctx.scale.ensemble(params.replicates);
    require(replicates >= 2, || "at least two replicates are needed".into())?;
    let problem = params.data.load(data_seed(ctx.seed))?;
    let (n, d) = problem.x_train.shape();
    let trainer = student_trainer(params.student, &params.student_mlp, d, 0.0, ctx.seed)?;
    let linear_students = params.student == ModelFamily::Linear;
    let sigma2 = problem.noise_variance()?;
    // Resampling is conditional on the training sample, so its spread
    // follows that sample's residual variance rather than the nominal one.
    let resample_sigma2 = problem.empirical_noise_variance()?;
    let sigma_x = second_moment(&problem.x_train);
    let full_fit = LinearModel::fit(&problem.x_train, &problem.y_train).at(|| "full-data fit".into())?;
    let teacher = match params.teacher {
        ModelFamily::Linear => None,
        family => Some(fit_regression_teacher(
            family,
            &params.teacher_mlp,
            &problem.x_train,
            &problem.y_train,
            ctx.seed,
        )?),
    };
    let pointwise_oracle = |m: usize| -> Result<Vec<f64>> {
        (0..problem.x_test.rows())
            .map(|i| bootstrap_variance(resample_sigma2, m, problem.x_test.row(i), &sigma_x))
            .collect::<kdlab_core::Result<Vec<f64>>>()
            .at(|| format!("variance oracle at m = {m}"))
    };

    let config = echo(
        params,
        &[
            ("replicates", replicates.into()),
            ("noise_variance", sigma2.into()),
            ("empirical_noise_variance", resample_sigma2.into()),
        ],
    );
    let mut out = ReportBuilder::new(NAME, ctx.seed, config, &COLUMNS, ctx.sink)?;
    let mut point = 0;
    for &variant in &params.variants {
        let mut ms = Vec::new();
        let mut vars = Vec::new();
        let mut mses = Vec::new();
        for &beta in &params.beta_grid {
            let m = ((beta * n as f64).round() as usize).clamp(1, n);
            let label = format!("{}:beta={beta}", variant_name(variant));
            let at = || label.clone();
            let seed = sweep_seed(ctx.seed, point);
            point += 1;
            let cfg = BootstrapConfig {
                variant,
                m,
                replicates,
                beta_grid: None,
            };
            let outcome = run_bootstrap(
                &problem.x_train,
                &problem.y_train,
                &problem.x_test,
                &cfg,
                &trainer,
                teacher.as_ref().map(|t| t as &dyn Regressor),
                seed,
            )
            .at(at)?;
            let ensemble = &outcome.ensemble;
            let pointwise = predictive_variance(ensemble, &problem.x_test).at(at)?;
            let var_mean = mean(&pointwise);
            let preds = ensemble.predictions.as_ref().expect("bootstrap ensembles predict");
            // Replicate b meets the same test noise at every m, so the trend
            // in m is not masked by fresh noise draws.
            let mut test_mse = Vec::with_capacity(replicates);
            for b in 0..replicates {
                let truth = problem.truth_draw(&mut RngStream::new(mix_seed(ctx.seed, TRUTH_STREAM), b as u64));
                test_mse.push(eval_mse(preds.row(b), &truth).at(at)?);
            }
            let mse = mean(&test_mse);

            let reference = match (variant, &outcome.fitted_teacher) {
                (BootstrapVariant::TeacherModel, Some(t)) => Some(&t.theta),
                (BootstrapVariant::TeacherModel, None) => None,
                (BootstrapVariant::GroundTruth, _) => Some(&full_fit.theta),
            };
            let max_dev = match reference {
                Some(theta) if linear_students => Some(
                    ensemble
                        .students
                        .iter()
                        .filter_map(|s| match s {
                            Student::Linear(l) => Some(l),
                            Student::Mlp(_) => None,
                        })
                        .flat_map(|l| l.theta.iter().zip(theta.iter()).map(|(a, b)| (a - b).abs()))
                        .fold(0.0, f64::max),
                ),
                _ => None,
            };

            let oracles = linear_students && variant == BootstrapVariant::GroundTruth;
            let (mut var_or, mut worst, mut mse_or) = (None, None, None);
            if oracles {
                let pw = pointwise_oracle(m)?;
                var_or = Some(mean(&pw));
                worst = pointwise
                    .iter()
                    .zip(&pw)
                    .map(|(mc, o)| (relative_error(*mc, *o), *mc, *o))
                    .max_by(|a, b| a.0.total_cmp(&b.0));
                mse_or = Some(bootstrap_mse(sigma2, d, m).at(at)?);
            }
            let rel = |mc: f64, o: Option<f64>| opt(o.map(|o| relative_error(mc, o)));
            let row = out.push_row(vec![
                Cell::text(variant_name(variant)),
                num(beta),
                Cell::count(m),
                num(var_mean),
                opt(var_or),
                rel(var_mean, var_or),
                opt(worst.map(|w| w.0)),
                num(mse),
                opt(mse_or),
                rel(mse, mse_or),
                opt(max_dev),
                Cell::count(outcome.retried.len()),
            ])?;
            if oracles && beta >= params.oracle_min_beta {
                let (o, (_, w_mc, w_or)) = (var_or.expect("set above"), worst.expect("set above"));
                out.check(row, &label, "pred_var_mean", var_mean, o, params.variance_tolerance);
                out.check(row, &label, "pred_var_worst_point", w_mc, w_or, params.variance_tolerance);
                out.check(row, &label, "test_mse", mse, mse_or.expect("set above"), params.mse_tolerance);
            }
            if variant == BootstrapVariant::TeacherModel && linear_students && params.teacher == ModelFamily::Linear {
                let dev = max_dev.unwrap_or(f64::INFINITY);
                let max_var = pointwise.iter().cloned().fold(0.0, f64::max);
                out.assert(
                    &format!("{label}:degenerate"),
                    max_var < 1e-18 && dev < 1e-10,
                    format!("max predictive variance {max_var:e}, max parameter deviation {dev:e}"),
                );
            }
            for w in &ensemble.warnings {
                out.warn(format!("{label}: {w}"));
            }
            ms.push(m as f64);
            vars.push(var_mean);
            mses.push(mse);
        }
        if variant == BootstrapVariant::GroundTruth {
            summarize_ground_truth(&mut out, &ms, &vars, &mses);
        }
    }
    out.plot(PlotSpec {
        title: "Ground-truth bootstrap predictive variance".into(),
        x: "m".into(),
        series: vec!["pred_var_mean".into()],
        oracle_series: if linear_students { vec!["pred_var_oracle".into()] } else { Vec::new() },
        filter: Some(("variant".into(), "ground_truth".into())),
        log_scale: true,
    });
    Ok(out.finish())
}

fn summarize_ground_truth(out: &mut ReportBuilder<'_>, ms: &[f64], vars: &[f64], mses: &[f64]) {
    let (lx, ly): (Vec<f64>, Vec<f64>) = ms
        .iter()
        .zip(vars)
        .filter(|(_, v)| **v > 0.0)
        .map(|(m, v)| (m.ln(), v.ln()))
        .unzip();
    if let Some(fit) = fit_line(&lx, &ly) {
        out.summary("log_log_slope", fit.slope);
        out.assert(
            "variance_scaling",
            (-1.15..=-0.85).contains(&fit.slope),
            format!("log-log slope {:.4} (need within [-1.15, -0.85])", fit.slope),
        );
    }
    // Sort by m so the direction check does not depend on grid order.
    let mut order: Vec<usize> = (0..ms.len()).collect();
    order.sort_by(|&a, &b| ms[a].total_cmp(&ms[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| mses[i]).collect();
    let up = increases(&sorted);
    out.summary("test_mse_increases", up);
    out.assert(
        "test_mse_decreasing",
        up <= 1,
        format!("{up} increases of test MSE along growing m (at most one allowed)"),
    );
}
