//! Entropy suppression under single-response distillation of toy sequence
//! models, checked by exhaustive enumeration.
//!
//! Each prompt owns an independent random teacher table and is completed
//! from the empty context. At every temperature `τ`, `students_per_prompt`
//! students start from uniform logits and each fits one teacher completion
//! sampled at `τ`. With `p_T` the teacher completion distribution at `τ` and
//! `p_S` a student's at temperature one, a prompt satisfies the assumption
//! when `H(E[p_S]) <= H(p_T)`; concavity then forces
//! `E[H(p_S)] <= H(p_T)`.

use std::collections::BTreeMap;

use kdlab_core::distillation::{distill_sequence_student_ensemble, Method, SequenceRecipe, StrategyConfig};
use kdlab_core::models::CategoricalSequenceModel;
use kdlab_core::numkit::{mean, mix_seed, AdamConfig, RngStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{echo, entropy, num, sweep_seed, RunContext};
use crate::config::{require, require_grid};
use crate::error::{Context, Result};
use crate::report::{Cell, PlotSpec, Report, ReportBuilder};

pub const NAME: &str = "sequence-suppression";

const TEACHER_STREAM: u64 = 0x7EAC;

/// Slack for rounding in entropy comparisons.
const ENTROPY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub prompts: usize,
    pub vocab_size: usize,
    pub max_length: usize,
    pub context_order: usize,
    /// Standard deviation of the teacher logits.
    pub teacher_scale: f64,
    pub students_per_prompt: usize,
    pub temperatures: Vec<f64>,
    pub epochs: usize,
    pub lr: f64,
    /// Smallest accepted per-temperature rate of the assumption.
    pub assumption_rate: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            prompts: 500,
            vocab_size: 5,
            max_length: 4,
            context_order: 1,
            teacher_scale: 1.0,
            students_per_prompt: 8,
            temperatures: vec![0.5, 0.8, 1.0, 1.2, 1.5, 2.0],
            epochs: 200,
            lr: 0.1,
            assumption_rate: 0.9,
        }
    }
}

impl Params {
    fn validate(&self) -> Result<()> {
        require(self.prompts > 0, || "prompts must be positive".into())?;
        require(self.vocab_size >= 2 && self.max_length >= 1, || {
            "need a vocabulary of at least two tokens and positive length".into()
        })?;
        require(self.teacher_scale >= 0.0 && self.teacher_scale.is_finite(), || {
            "teacher_scale must be non-negative".into()
        })?;
        require(self.students_per_prompt >= 1, || "students_per_prompt must be positive".into())?;
        require_grid("temperatures", &self.temperatures, |t| t > 0.0 && t.is_finite())?;
        require(self.epochs > 0 && self.lr > 0.0, || "training schedule must be positive".into())?;
        require((0.0..=1.0).contains(&self.assumption_rate), || "assumption_rate must lie in [0, 1]".into())
    }
}

const COLUMNS: [&str; 9] = [
    "temperature",
    "prompts",
    "assumption_holds",
    "assumption_rate",
    "inequality_holds",
    "inequality_rate",
    "mean_teacher_entropy",
    "mean_student_entropy",
    "mean_entropy_of_mean_student",
];

/// Entropies for one prompt: `(H(p_T), E[H(p_S)], H(E[p_S]))`.
type PromptEntropies = (f64, f64, f64);

fn prompt_entropies(
    params: &Params,
    teacher: &CategoricalSequenceModel,
    init: &CategoricalSequenceModel,
    temperature: f64,
    seed: u64,
) -> kdlab_core::Result<PromptEntropies> {
    let prompts = [Vec::new()];
    let strategy = StrategyConfig::new(Method::SingleResponse, 1, params.students_per_prompt);
    let recipe = SequenceRecipe {
        epochs: params.epochs,
        adam: AdamConfig::with_lr(params.lr),
        teacher_temperature: temperature,
        student_temperature: 1.0,
    };
    let ensemble = distill_sequence_student_ensemble(teacher, &prompts, &strategy, init, &recipe, seed)?;
    let p_t: Vec<f64> = teacher.enumerate(&[], temperature)?.into_iter().map(|(_, p)| p).collect();
    let mut mixture: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut student_entropies = Vec::with_capacity(ensemble.students.len());
    let share = 1.0 / ensemble.students.len() as f64;
    for s in &ensemble.students {
        let dist = s.enumerate(&[], 1.0)?;
        student_entropies.push(entropy(&dist.iter().map(|(_, p)| *p).collect::<Vec<_>>()));
        for (seq, p) in dist {
            *mixture.entry(seq).or_insert(0.0) += share * p;
        }
    }
    let mixed: Vec<f64> = mixture.into_values().collect();
    Ok((entropy(&p_t), mean(&student_entropies), entropy(&mixed)))
}

pub fn run(params: &Params, ctx: RunContext<'_>) -> Result<Report> {
    params.validate()?;
    let teachers = (0..params.prompts)
        .map(|p| {
            CategoricalSequenceModel::random(
                params.vocab_size,
                params.context_order,
                params.max_length,
                params.teacher_scale,
                &mut RngStream::new(mix_seed(ctx.seed, TEACHER_STREAM), p as u64),
            )
        })
        .collect::<kdlab_core::Result<Vec<_>>>()
        .at(|| "teacher construction".into())?;
    let init = CategoricalSequenceModel::uniform(params.vocab_size, params.context_order, params.max_length)
        .at(|| "student initialization".into())?;

    let mut out = ReportBuilder::new(NAME, ctx.seed, echo(params, &[]), &COLUMNS, ctx.sink)?;
    let mut min_rate = f64::INFINITY;
    let mut all_hold = true;
    for (ti, &tau) in params.temperatures.iter().enumerate() {
        let seed = sweep_seed(ctx.seed, ti);
        let results: Vec<kdlab_core::Result<PromptEntropies>> = teachers
            .par_iter()
            .enumerate()
            .map(|(p, t)| prompt_entropies(params, t, &init, tau, mix_seed(seed, p as u64)))
            .collect();
        let entropies = results
            .into_iter()
            .enumerate()
            .map(|(p, r)| r.at(|| format!("temperature {tau}, prompt {p}")))
            .collect::<Result<Vec<_>>>()?;
        let assumed: Vec<&PromptEntropies> = entropies
            .iter()
            .filter(|(h_t, _, h_mix)| *h_mix <= h_t + ENTROPY_SLACK)
            .collect();
        let holds = assumed.iter().filter(|(h_t, h_s, _)| *h_s <= h_t + ENTROPY_SLACK).count();
        let rate = assumed.len() as f64 / entropies.len() as f64;
        let inequality_rate = if assumed.is_empty() { 1.0 } else { holds as f64 / assumed.len() as f64 };
        out.push_row(vec![
            num(tau),
            Cell::count(entropies.len()),
            Cell::count(assumed.len()),
            num(rate),
            Cell::count(holds),
            num(inequality_rate),
            num(mean(&entropies.iter().map(|e| e.0).collect::<Vec<_>>())),
            num(mean(&entropies.iter().map(|e| e.1).collect::<Vec<_>>())),
            num(mean(&entropies.iter().map(|e| e.2).collect::<Vec<_>>())),
        ])?;
        out.assert(
            &format!("tau={tau}:inequality_on_assumption"),
            holds == assumed.len(),
            format!("{holds} of {} prompts", assumed.len()),
        );
        out.assert(
            &format!("tau={tau}:assumption_rate"),
            rate >= params.assumption_rate,
            format!("{rate:.4} (need >= {})", params.assumption_rate),
        );
        min_rate = min_rate.min(rate);
        all_hold &= holds == assumed.len();
    }
    out.summary("min_assumption_rate", min_rate);
    out.summary("inequality_always_holds", all_hold);
    out.plot(PlotSpec {
        title: "Teacher and student completion entropy".into(),
        x: "temperature".into(),
        series: vec![
            "mean_teacher_entropy".into(),
            "mean_student_entropy".into(),
            "mean_entropy_of_mean_student".into(),
        ],
        oracle_series: Vec::new(),
        filter: None,
        log_scale: false,
    });
    Ok(out.finish())
}
