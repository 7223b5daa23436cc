//! Averaging and variance weighting over `k` teacher responses, against the
//! single-response baseline.
//!
//! For least-squares students the averaged target has variance `σ_T²/k`,
//! so the expected inter-student variance is `(σ_T²/k)` times the mean test
//! leverage. Variance-weighted rows have no closed form and carry none.

use kdlab_core::distillation::{distill_ensemble, Method, StrategyConfig};
use kdlab_core::models::{NoiseSpec, Regressor};
use kdlab_core::numkit::{mean, mix_seed, RngStream};
use kdlab_core::oracles::{expected_mse_vs_teacher, inter_student_variance_std_error};
use kdlab_core::uncertainty::{eval_mse, inter_student_variance};
use serde::{Deserialize, Serialize};

use super::{data_seed, echo, fit_regression_teacher, num, opt, student_trainer, sweep_seed, RunContext};
use crate::config::{require, MlpSettings, ModelFamily, RegressionData};
use crate::error::{Context, Result};
use crate::report::{relative_error, Cell, PlotSpec, Report, ReportBuilder};

pub const NAME: &str = "variance-aware-sweep";

const TRUTH_STREAM: u64 = 0x7207;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub data: RegressionData,
    /// Teacher noise `σ_T² = α Var(y)`.
    pub alpha: f64,
    pub k_grid: Vec<usize>,
    pub methods: Vec<Method>,
    pub students: Option<usize>,
    pub teacher: ModelFamily,
    pub student: ModelFamily,
    pub teacher_mlp: MlpSettings,
    pub student_mlp: MlpSettings,
    pub tolerance_sigmas: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            data: RegressionData::default(),
            alpha: 1.0,
            k_grid: vec![2, 3, 5, 10],
            methods: vec![Method::Averaging, Method::VarianceWeighted],
            students: None,
            teacher: ModelFamily::Linear,
            student: ModelFamily::Linear,
            teacher_mlp: MlpSettings::with_hidden(128),
            student_mlp: MlpSettings::default(),
            tolerance_sigmas: 4.0,
        }
    }
}

impl Params {
    fn validate(&self) -> Result<()> {
        self.data.validate()?;
        require(self.alpha > 0.0 && self.alpha.is_finite(), || "alpha must be positive".into())?;
        require(!self.k_grid.is_empty() && self.k_grid.iter().all(|&k| k >= 1), || {
            "k_grid must hold positive response counts".into()
        })?;
        require(!self.methods.is_empty(), || "methods must not be empty".into())?;
        self.teacher_mlp.validate("teacher_mlp")?;
        self.student_mlp.validate("student_mlp")?;
        require(self.tolerance_sigmas > 0.0, || "tolerance_sigmas must be positive".into())
    }
}

const COLUMNS: [&str; 7] = [
    "method",
    "k",
    "v_inter",
    "v_inter_oracle",
    "v_inter_rel_err",
    "test_mse",
    "l_eval_teacher",
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
    let trainer = student_trainer(params.student, &params.student_mlp, problem.x_train.cols(), 0.0, ctx.seed)?;
    let sigma_t = NoiseSpec::alpha(params.alpha)
        .resolve_sigma(problem.target_variance())
        .at(|| "teacher noise".into())?;
    let sigma2 = sigma_t * sigma_t;
    let teacher_test = teacher.predict(&problem.x_test).at(|| "teacher prediction".into())?;
    let linear = params.teacher == ModelFamily::Linear && params.student == ModelFamily::Linear;

    let mut points = vec![(Method::SingleResponse, 1)];
    for &method in &params.methods {
        for &k in &params.k_grid {
            if method != Method::SingleResponse {
                points.push((method, k));
            }
        }
    }

    let config = echo(params, &[("students", p.into()), ("sigma_t2", sigma2.into())]);
    let mut out = ReportBuilder::new(NAME, ctx.seed, config, &COLUMNS, ctx.sink)?;
    let mut results = Vec::new();
    for (i, &(method, k)) in points.iter().enumerate() {
        let label = format!("{}:k={k}", method.name());
        let at = || label.clone();
        let seed = sweep_seed(ctx.seed, i);
        let strategy = StrategyConfig::new(method, k, p);
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
        let mut test_mse = Vec::with_capacity(p);
        let mut vs_teacher = Vec::with_capacity(p);
        for j in 0..p {
            let truth = problem.truth_draw(&mut RngStream::new(mix_seed(seed, TRUTH_STREAM), j as u64));
            test_mse.push(eval_mse(preds.row(j), &truth).at(at)?);
            vs_teacher.push(eval_mse(preds.row(j), &teacher_test).at(at)?);
        }
        let effective = match method {
            Method::SingleResponse => Some(sigma2),
            Method::Averaging | Method::MultiResponse => Some(sigma2 / k as f64),
            Method::VarianceWeighted => None,
        };
        let (mut oracle, mut tol) = (None, 0.0);
        if let (true, Some(s2)) = (linear, effective) {
            let o = expected_mse_vs_teacher(s2, &problem.x_train, &problem.x_test).at(at)?;
            let se = inter_student_variance_std_error(s2, &problem.x_train, &problem.x_test, p).at(at)?;
            tol = params.tolerance_sigmas * se / o.max(1e-12);
            oracle = Some(o);
        }
        let row = out.push_row(vec![
            Cell::text(method.name()),
            Cell::count(k),
            num(v_inter),
            opt(oracle),
            opt(oracle.map(|o| relative_error(v_inter, o))),
            num(mean(&test_mse)),
            num(mean(&vs_teacher)),
        ])?;
        if let Some(o) = oracle {
            out.check(row, &label, "v_inter", v_inter, o, tol);
        }
        for w in ensemble.warnings {
            out.warn(format!("{label}: {w}"));
        }
        results.push((method, k, v_inter));
    }

    let single = results[0].2;
    let lookup = |m: Method, k: usize| results.iter().find(|r| r.0 == m && r.1 == k).map(|r| r.2);
    for &k in &params.k_grid {
        if k < 2 {
            continue;
        }
        if let Some(avg) = lookup(Method::Averaging, k) {
            out.assert(
                &format!("averaging_k{k}_below_single"),
                avg < single,
                format!("averaging {avg:.4e} vs single {single:.4e}"),
            );
            if let Some(vw) = lookup(Method::VarianceWeighted, k) {
                out.assert(
                    &format!("variance_weighted_k{k}_most_stable"),
                    vw <= avg,
                    format!("variance weighted {vw:.4e} vs averaging {avg:.4e}"),
                );
            }
        }
    }
    out.plot(PlotSpec {
        title: "Inter-student variance vs teacher responses (averaging)".into(),
        x: "k".into(),
        series: vec!["v_inter".into(), "test_mse".into()],
        oracle_series: if linear { vec!["v_inter_oracle".into()] } else { Vec::new() },
        filter: Some(("method".into(), Method::Averaging.name().into())),
        log_scale: false,
    });
    Ok(out.finish())
}
