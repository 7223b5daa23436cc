//! Inter-student variance as a function of teacher noise `σ_T² = α Var(y)`.
//!
//! With a least-squares teacher and least-squares students every metric has
//! a closed form; the tolerance of each check is `tolerance_sigmas` standard
//! errors of its Monte Carlo estimate (analytic for `V_inter`, empirical for
//! the losses), plus `tolerance_floor` for rounding at `α = 0`.

use kdlab_core::distillation::{distill_ensemble, Method, Student, StrategyConfig};
use kdlab_core::models::{NoiseSpec, Regressor};
use kdlab_core::numkit::{mix_seed, RngStream};
use kdlab_core::oracles::{expected_mse_vs_teacher, expected_mse_vs_truth, inter_student_variance_std_error};
use kdlab_core::uncertainty::{eval_mse, inter_student_variance};
use serde::{Deserialize, Serialize};

use super::{
    data_seed, echo, fit_line, fit_regression_teacher, increases, mean_and_se, num, opt, student_trainer, sweep_seed,
    RunContext,
};
use crate::config::{grid, require, require_grid, MlpSettings, ModelFamily, RegressionData};
use crate::error::{Context, Result};
use crate::report::{PlotSpec, Report, ReportBuilder};

pub const NAME: &str = "teacher-noise-sweep";

const TRUTH_STREAM: u64 = 0x7207;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub data: RegressionData,
    pub alpha_grid: Vec<f64>,
    pub students: Option<usize>,
    pub teacher: ModelFamily,
    pub student: ModelFamily,
    pub teacher_mlp: MlpSettings,
    pub student_mlp: MlpSettings,
    /// Multiplicative weight noise on network students.
    pub student_init_sigma: f64,
    pub tolerance_sigmas: f64,
    pub tolerance_floor: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            data: RegressionData::default(),
            alpha_grid: grid(0.0, 2.0, 0.25),
            students: None,
            teacher: ModelFamily::Linear,
            student: ModelFamily::Linear,
            teacher_mlp: MlpSettings::with_hidden(128),
            student_mlp: MlpSettings::default(),
            student_init_sigma: 0.0,
            tolerance_sigmas: 4.0,
            tolerance_floor: 1e-6,
        }
    }
}

impl Params {
    fn validate(&self) -> Result<()> {
        self.data.validate()?;
        require_grid("alpha_grid", &self.alpha_grid, |a| a >= 0.0 && a.is_finite())?;
        self.teacher_mlp.validate("teacher_mlp")?;
        self.student_mlp.validate("student_mlp")?;
        require(self.student_init_sigma >= 0.0, || "student_init_sigma must be non-negative".into())?;
        require(self.tolerance_sigmas > 0.0 && self.tolerance_floor >= 0.0, || {
            "tolerances must be positive".into()
        })
    }
}

const COLUMNS: [&str; 11] = [
    "alpha",
    "sigma_t2",
    "v_inter",
    "v_inter_oracle",
    "v_inter_rel_err",
    "l_eval_teacher",
    "l_eval_teacher_oracle",
    "l_eval_teacher_rel_err",
    "l_eval_truth",
    "l_eval_truth_oracle",
    "l_eval_truth_rel_err",
];

pub fn run(params: &Params, ctx: RunContext<'_>) -> Result<Report> {
    params.validate()?;
    let p = ctx.scale.ensemble(params.students);
    require(p >= 2, || "at least two students are needed".into())?;
    let problem = params.data.load(data_seed(ctx.seed))?;
    let teacher = fit_regression_teacher(
        params.teacher,
        &params.teacher_mlp,
        &problem.x_train,
        &problem.y_train,
        ctx.seed,
    )?;
    let trainer = student_trainer(
        params.student,
        &params.student_mlp,
        problem.x_train.cols(),
        params.student_init_sigma,
        ctx.seed,
    )?;
    let var_y = problem.target_variance();
    let teacher_test = teacher.predict(&problem.x_test).at(|| "teacher prediction".into())?;
    let linear = params.teacher == ModelFamily::Linear && params.student == ModelFamily::Linear;
    let theta_t = match &teacher {
        Student::Linear(m) => Some(m.theta.clone()),
        Student::Mlp(_) => None,
    };

    let config = echo(params, &[("students", p.into()), ("var_y", var_y.into())]);
    let mut out = ReportBuilder::new(NAME, ctx.seed, config, &COLUMNS, ctx.sink)?;
    let mut sigma2s = Vec::new();
    let mut v_inters = Vec::new();
    for (i, &alpha) in params.alpha_grid.iter().enumerate() {
        let at = || format!("alpha = {alpha}");
        let sigma_t = NoiseSpec::alpha(alpha).resolve_sigma(var_y).at(at)?;
        let sigma2 = sigma_t * sigma_t;
        let seed = sweep_seed(ctx.seed, i);
        let strategy = StrategyConfig::new(Method::SingleResponse, 1, p);
        let ensemble = distill_ensemble(
            &teacher,
            &problem.x_train,
            &problem.x_test,
            sigma_t,
            &strategy,
            &trainer,
            seed,
        )
        .at(at)?;
        let preds = ensemble.predictions.as_ref().expect("regression ensembles predict");
        let v_inter = inter_student_variance(preds).at(at)?;
        let mut vs_teacher = Vec::with_capacity(p);
        let mut vs_truth = Vec::with_capacity(p);
        for j in 0..p {
            let row = preds.row(j);
            vs_teacher.push(eval_mse(row, &teacher_test).at(at)?);
            let truth = problem.truth_draw(&mut RngStream::new(mix_seed(seed, TRUTH_STREAM), j as u64));
            vs_truth.push(eval_mse(row, &truth).at(at)?);
        }
        let (l_teacher, se_teacher) = mean_and_se(&vs_teacher);
        let (l_truth, se_truth) = mean_and_se(&vs_truth);

        let (mut v_or, mut t_or, mut truth_or) = (None, None, None);
        let mut v_tol = 0.0;
        if linear {
            let oracle = expected_mse_vs_teacher(sigma2, &problem.x_train, &problem.x_test).at(at)?;
            let se = inter_student_variance_std_error(sigma2, &problem.x_train, &problem.x_test, p).at(at)?;
            v_tol = tolerance(params, se, oracle);
            v_or = Some(oracle);
            t_or = Some(oracle);
            if let (Some(theta_star), Some(sigma_eta), Some(theta_t)) =
                (&problem.theta_star, problem.sigma_eta, &theta_t)
            {
                truth_or = Some(
                    expected_mse_vs_truth(
                        theta_t,
                        theta_star,
                        sigma2,
                        sigma_eta * sigma_eta,
                        &problem.x_train,
                        &problem.x_test,
                    )
                    .at(at)?,
                );
            }
        }
        let rel = |mc: f64, oracle: Option<f64>| opt(oracle.map(|o| crate::report::relative_error(mc, o)));
        let row = out.push_row(vec![
            num(alpha),
            num(sigma2),
            num(v_inter),
            opt(v_or),
            rel(v_inter, v_or),
            num(l_teacher),
            opt(t_or),
            rel(l_teacher, t_or),
            num(l_truth),
            opt(truth_or),
            rel(l_truth, truth_or),
        ])?;
        let label = format!("alpha={alpha}");
        if let Some(o) = v_or {
            out.check(row, &label, "v_inter", v_inter, o, v_tol);
        }
        if let Some(o) = t_or {
            out.check(row, &label, "l_eval_teacher", l_teacher, o, tolerance(params, se_teacher, o));
        }
        if let Some(o) = truth_or {
            out.check(row, &label, "l_eval_truth", l_truth, o, tolerance(params, se_truth, o));
        }
        for w in ensemble.warnings {
            out.warn(format!("{label}: {w}"));
        }
        sigma2s.push(sigma2);
        v_inters.push(v_inter);
    }

    summarize(&mut out, params, &sigma2s, &v_inters);
    out.plot(PlotSpec {
        title: "Inter-student variance vs teacher noise".into(),
        x: "alpha".into(),
        series: vec!["v_inter".into(), "l_eval_teacher".into()],
        oracle_series: if linear { vec!["v_inter_oracle".into()] } else { Vec::new() },
        filter: None,
        log_scale: false,
    });
    Ok(out.finish())
}

fn tolerance(params: &Params, se: f64, oracle: f64) -> f64 {
    params.tolerance_sigmas * se / oracle.abs().max(1e-12) + params.tolerance_floor
}

fn summarize(out: &mut ReportBuilder<'_>, params: &Params, sigma2s: &[f64], v_inters: &[f64]) {
    let v_max = v_inters.iter().cloned().fold(0.0, f64::max);
    if let Some(fit) = fit_line(sigma2s, v_inters) {
        out.summary("linear_fit", fit);
        out.summary("intercept_ratio", fit.intercept.abs() / v_max.max(1e-300));
        if params.student == ModelFamily::Linear {
            out.assert(
                "linear_fit_r2",
                fit.r_squared >= 0.98,
                format!("R² = {:.6} (need >= 0.98)", fit.r_squared),
            );
            out.assert(
                "linear_fit_intercept",
                fit.intercept.abs() <= 0.05 * v_max,
                format!("|b| = {:.3e}, 5% of max V_inter = {:.3e}", fit.intercept.abs(), 0.05 * v_max),
            );
        }
    }
    // Growth exponent from the log-log fit over the positive-noise points.
    let (lx, ly): (Vec<f64>, Vec<f64>) = sigma2s
        .iter()
        .zip(v_inters)
        .filter(|(s, v)| **s > 0.0 && **v > 0.0)
        .map(|(s, v)| (s.ln(), v.ln()))
        .unzip();
    if let Some(fit) = fit_line(&lx, &ly) {
        out.summary("growth_exponent", fit.slope);
    }
    if params.student == ModelFamily::Mlp {
        let positive = sigma2s.iter().zip(v_inters).all(|(s, v)| *s == 0.0 || *v > 0.0);
        let mut order: Vec<usize> = (0..sigma2s.len()).collect();
        order.sort_by(|&a, &b| sigma2s[a].total_cmp(&sigma2s[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| -v_inters[i]).collect();
        let monotone = increases(&sorted) == 0;
        out.assert("v_inter_positive", positive, "V_inter > 0 wherever teacher noise is positive");
        out.assert("v_inter_monotone", monotone, "V_inter is non-decreasing in teacher noise");
    }
}
