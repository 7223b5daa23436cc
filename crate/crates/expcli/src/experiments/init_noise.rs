//! Network students from one shared Kaiming initialization, each perturbed
//! by multiplicative weight noise of scale `σ_init`, distilled from a fixed
//! teacher.

use kdlab_core::distillation::{distill_ensemble, Method, StrategyConfig};
use kdlab_core::models::Regressor;
use kdlab_core::numkit::{mean, mix_seed, sample_variance, RngStream};
use kdlab_core::uncertainty::{eval_mse, inter_student_variance};
use serde::{Deserialize, Serialize};

use super::{data_seed, echo, fit_line, fit_regression_teacher, num, student_trainer, sweep_seed, RunContext};
use crate::config::{grid, require, require_grid, MlpSettings, ModelFamily, RegressionData};
use crate::error::{Context, Result};
use crate::report::{PlotSpec, Report, ReportBuilder};

pub const NAME: &str = "init-noise-sweep";

const TRUTH_STREAM: u64 = 0x7207;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub data: RegressionData,
    pub sigma_init_grid: Vec<f64>,
    pub students: Option<usize>,
    pub teacher: ModelFamily,
    pub teacher_mlp: MlpSettings,
    pub student_mlp: MlpSettings,
    /// Teacher response noise; zero gives deterministic supervision.
    pub teacher_sigma: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            data: RegressionData::default(),
            sigma_init_grid: grid(0.0, 0.4, 0.05),
            students: None,
            teacher: ModelFamily::Mlp,
            teacher_mlp: MlpSettings::with_hidden(128),
            student_mlp: MlpSettings::default(),
            teacher_sigma: 0.0,
        }
    }
}

impl Params {
    fn validate(&self) -> Result<()> {
        self.data.validate()?;
        require_grid("sigma_init_grid", &self.sigma_init_grid, |s| s >= 0.0 && s.is_finite())?;
        self.teacher_mlp.validate("teacher_mlp")?;
        self.student_mlp.validate("student_mlp")?;
        require(self.teacher_sigma >= 0.0 && self.teacher_sigma.is_finite(), || {
            "teacher_sigma must be non-negative".into()
        })
    }
}

const COLUMNS: [&str; 6] = [
    "sigma_init",
    "v_inter",
    "test_mse_mean",
    "test_mse_variance",
    "l_eval_teacher",
    "train_loss_mean",
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
    let teacher_test = teacher.predict(&problem.x_test).at(|| "teacher prediction".into())?;

    let config = echo(params, &[("students", p.into())]);
    let mut out = ReportBuilder::new(NAME, ctx.seed, config, &COLUMNS, ctx.sink)?;
    let mut v_inters = Vec::new();
    for (i, &sigma_init) in params.sigma_init_grid.iter().enumerate() {
        let at = || format!("sigma_init = {sigma_init}");
        // Same base initialization at every sweep point.
        let trainer = student_trainer(
            ModelFamily::Mlp,
            &params.student_mlp,
            problem.x_train.cols(),
            sigma_init,
            ctx.seed,
        )?;
        let seed = sweep_seed(ctx.seed, i);
        let strategy = StrategyConfig::new(Method::SingleResponse, 1, p);
        let ensemble = distill_ensemble(
            &teacher,
            &problem.x_train,
            &problem.x_test,
            params.teacher_sigma,
            &strategy,
            &trainer,
            seed,
        )
        .at(at)?;
        let preds = ensemble.predictions.as_ref().expect("regression ensembles predict");
        let v_inter = inter_student_variance(preds).at(at)?;
        let mut test_mse = Vec::with_capacity(p);
        let mut vs_teacher = Vec::with_capacity(p);
        for j in 0..p {
            let truth = problem.truth_draw(&mut RngStream::new(mix_seed(seed, TRUTH_STREAM), j as u64));
            test_mse.push(eval_mse(preds.row(j), &truth).at(at)?);
            vs_teacher.push(eval_mse(preds.row(j), &teacher_test).at(at)?);
        }
        let final_losses: Vec<f64> = ensemble
            .loss_traces
            .iter()
            .filter_map(|t| t.iter().cloned().reduce(f64::min))
            .collect();
        out.push_row(vec![
            num(sigma_init),
            num(v_inter),
            num(mean(&test_mse)),
            num(sample_variance(&test_mse)),
            num(mean(&vs_teacher)),
            num(mean(&final_losses)),
        ])?;
        v_inters.push(v_inter);
        // Identical initializations and noise-free targets train identically.
        if sigma_init == 0.0 && params.teacher_sigma == 0.0 {
            let identical = (1..p).all(|j| preds.row(j) == preds.row(0));
            out.assert(
                "unperturbed_students_agree",
                identical,
                format!("students differ at sigma_init 0 (V_inter {v_inter:e})"),
            );
        }
    }

    if let Some(fit) = fit_line(&params.sigma_init_grid, &v_inters) {
        out.summary("v_inter_fit", fit);
    }
    out.plot(PlotSpec {
        title: "Student spread vs initialization noise".into(),
        x: "sigma_init".into(),
        series: vec!["test_mse_mean".into(), "v_inter".into()],
        oracle_series: Vec::new(),
        filter: None,
        log_scale: false,
    });
    Ok(out.finish())
}
