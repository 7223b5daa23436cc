//! Noise transfer from a noisy sequence teacher to its students.
//!
//! Each prompt owns an independent ground-truth table with its own logit
//! scale, so prompts differ in how noisy their completions are. The teacher
//! samples the ground truth at `teacher_temperature`; students start from a
//! pretrained initialization (ground truth plus Gaussian logit noise) and
//! are distilled with each method. A baseline ensemble is trained the same
//! way on ground-truth samples at temperature one.
//!
//! Per prompt, teacher noise is the dispersion of `eval_responses` ground
//! truth completions at `eval_temperature`. Student noise defaults to the
//! dispersion of the students' greedy completions, the spread introduced by
//! the distillation runs themselves; sampled completions pooled across the
//! ensemble or averaged per student are available as alternatives. Student
//! noise is then regressed on teacher noise across prompts.

use kdlab_core::distillation::{distill_sequence_student_ensemble, Method, SequenceRecipe, StrategyConfig};
use kdlab_core::models::{sample_sequences, CategoricalSequenceModel};
use kdlab_core::numkit::{mean, mix_seed, AdamConfig, RngStream};
use kdlab_core::uncertainty::{dispersion, noise_decomposition, NoiseDecomposition};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{echo, num, sweep_seed, RunContext};
use crate::config::require;
use crate::error::{Context, Result};
use crate::report::{Cell, Report, ReportBuilder};

pub const NAME: &str = "sequence-noise";

const PROMPT_STREAM: u64 = 0x960;
const DISTILL_STREAM: u64 = 0xD157;
const BASELINE_STREAM: u64 = 0xBA5E;
const EVAL_STREAM: u64 = 0xE7A1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentNoise {
    /// Dispersion of all students' completions taken together.
    Pooled,
    /// Mean over students of each student's own dispersion.
    PerStudent,
    /// Dispersion of the students' greedy completions: spread that comes
    /// from the distillation runs rather than from sampling.
    AcrossStudents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub runs: usize,
    pub prompts: usize,
    pub vocab_size: usize,
    pub max_length: usize,
    pub context_order: usize,
    /// Ground-truth logit scales are uniform on this interval per prompt.
    pub truth_scale: (f64, f64),
    /// Standard deviation of the logit noise in the pretrained student.
    pub init_noise: f64,
    pub teacher_temperature: f64,
    pub eval_temperature: f64,
    pub eval_responses: usize,
    pub students: usize,
    pub k: usize,
    pub methods: Vec<Method>,
    pub student_noise: StudentNoise,
    pub epochs: usize,
    pub lr: f64,
    /// Smallest accepted fraction of runs in which a method beats
    /// single-response distillation on both systematic noise and `R²`.
    pub win_rate: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            runs: 20,
            prompts: 200,
            vocab_size: 5,
            max_length: 4,
            context_order: 1,
            truth_scale: (0.2, 4.0),
            init_noise: 0.25,
            teacher_temperature: 1.2,
            eval_temperature: 0.8,
            eval_responses: 30,
            students: 20,
            k: 5,
            methods: vec![Method::SingleResponse, Method::Averaging, Method::VarianceWeighted],
            student_noise: StudentNoise::AcrossStudents,
            epochs: 100,
            lr: 0.1,
            win_rate: 0.8,
        }
    }
}

impl Params {
    fn validate(&self) -> Result<()> {
        require(self.runs > 0, || "runs must be positive".into())?;
        require(self.prompts >= 3, || "at least three prompts are needed for a fit".into())?;
        require(self.vocab_size >= 2 && self.max_length >= 1, || {
            "need a vocabulary of at least two tokens and positive length".into()
        })?;
        let (lo, hi) = self.truth_scale;
        require(lo >= 0.0 && hi >= lo && hi.is_finite(), || "truth_scale must be an ordered pair".into())?;
        require(self.init_noise >= 0.0 && self.init_noise.is_finite(), || "init_noise must be non-negative".into())?;
        require(self.teacher_temperature > 0.0 && self.eval_temperature > 0.0, || {
            "temperatures must be positive".into()
        })?;
        require(self.eval_responses >= 2, || "eval_responses must be at least two".into())?;
        require(self.students >= 1 && self.k >= 1, || "students and k must be positive".into())?;
        require(self.methods.contains(&Method::SingleResponse), || {
            "methods must include single_response as the reference".into()
        })?;
        require(self.epochs > 0 && self.lr > 0.0, || "training schedule must be positive".into())?;
        require((0.0..=1.0).contains(&self.win_rate), || "win_rate must lie in [0, 1]".into())
    }

    fn recipe(&self, teacher_temperature: f64) -> SequenceRecipe {
        SequenceRecipe {
            epochs: self.epochs,
            adam: AdamConfig::with_lr(self.lr),
            teacher_temperature,
            student_temperature: 1.0,
        }
    }
}

const COLUMNS: [&str; 9] = [
    "run",
    "method",
    "k",
    "slope",
    "intercept",
    "r_squared",
    "avg_noise",
    "baseline_avg_noise",
    "avg_systematic_noise",
];

/// Teacher, baseline and per-method student noise for one prompt.
struct PromptNoise {
    teacher: f64,
    baseline: f64,
    students: Vec<f64>,
}

fn student_noise(
    params: &Params,
    students: &[CategoricalSequenceModel],
    seed: u64,
) -> kdlab_core::Result<f64> {
    if params.student_noise == StudentNoise::AcrossStudents {
        let modes = students.iter().map(|m| m.greedy(&[])).collect::<kdlab_core::Result<Vec<_>>>()?;
        return dispersion(&modes, params.vocab_size);
    }
    let mut per_student = Vec::with_capacity(students.len());
    let mut pooled = Vec::with_capacity(students.len() * params.eval_responses);
    for (s, model) in students.iter().enumerate() {
        let mut rng = RngStream::new(seed, s as u64);
        let samples = sample_sequences(model, &[], params.eval_temperature, params.eval_responses, &mut rng)?;
        match params.student_noise {
            StudentNoise::Pooled => pooled.extend(samples),
            StudentNoise::PerStudent => per_student.push(dispersion(&samples, params.vocab_size)?),
            StudentNoise::AcrossStudents => unreachable!("handled above"),
        }
    }
    match params.student_noise {
        StudentNoise::Pooled => dispersion(&pooled, params.vocab_size),
        StudentNoise::PerStudent | StudentNoise::AcrossStudents => Ok(mean(&per_student)),
    }
}

fn prompt_noise(params: &Params, run_seed: u64, q: usize) -> kdlab_core::Result<PromptNoise> {
    let rng = RngStream::new(mix_seed(run_seed, PROMPT_STREAM), q as u64);
    let (lo, hi) = params.truth_scale;
    let scale = lo + (hi - lo) * rng.child(0).uniform();
    let truth = CategoricalSequenceModel::random(
        params.vocab_size,
        params.context_order,
        params.max_length,
        scale,
        &mut rng.child(1),
    )?;
    let mut noise_rng = rng.child(2);
    let init_logits: Vec<f64> = truth
        .logits()
        .iter()
        .map(|l| l + params.init_noise * noise_rng.standard_normal())
        .collect();
    let init = truth.with_logits(init_logits)?;
    let prompts = [Vec::new()];
    let eval_seed = mix_seed(mix_seed(run_seed, EVAL_STREAM), q as u64);

    let truth_samples = sample_sequences(
        &truth,
        &[],
        params.eval_temperature,
        params.eval_responses,
        &mut rng.child(3),
    )?;
    let teacher = dispersion(&truth_samples, params.vocab_size)?;

    let single = StrategyConfig::new(Method::SingleResponse, 1, params.students);
    let baseline_seed = mix_seed(mix_seed(run_seed, BASELINE_STREAM), q as u64);
    let base = distill_sequence_student_ensemble(&truth, &prompts, &single, &init, &params.recipe(1.0), baseline_seed)?;
    let baseline = student_noise(params, &base.students, eval_seed)?;

    // Every method sees the same teacher streams, so comparisons are paired.
    let distill_seed = mix_seed(mix_seed(run_seed, DISTILL_STREAM), q as u64);
    let students = params
        .methods
        .iter()
        .map(|&method| {
            let strategy = StrategyConfig::new(method, params.k, params.students);
            let recipe = params.recipe(params.teacher_temperature);
            let ens = distill_sequence_student_ensemble(&truth, &prompts, &strategy, &init, &recipe, distill_seed)?;
            student_noise(params, &ens.students, eval_seed)
        })
        .collect::<kdlab_core::Result<Vec<_>>>()?;
    Ok(PromptNoise {
        teacher,
        baseline,
        students,
    })
}

pub fn run(params: &Params, ctx: RunContext<'_>) -> Result<Report> {
    params.validate()?;
    let mut out = ReportBuilder::new(NAME, ctx.seed, echo(params, &[]), &COLUMNS, ctx.sink)?;
    let single_idx = params
        .methods
        .iter()
        .position(|&m| m == Method::SingleResponse)
        .expect("validated");
    let mut wins = vec![0usize; params.methods.len()];
    for r in 0..params.runs {
        let run_seed = sweep_seed(ctx.seed, r);
        let results: Vec<kdlab_core::Result<PromptNoise>> = (0..params.prompts)
            .into_par_iter()
            .map(|q| prompt_noise(params, run_seed, q))
            .collect();
        let noise = results
            .into_iter()
            .enumerate()
            .map(|(q, n)| n.at(|| format!("run {r}, prompt {q}")))
            .collect::<Result<Vec<_>>>()?;
        let teacher: Vec<f64> = noise.iter().map(|n| n.teacher).collect();
        let baseline: Vec<f64> = noise.iter().map(|n| n.baseline).collect();
        let mut decomps: Vec<NoiseDecomposition> = Vec::with_capacity(params.methods.len());
        for (mi, &method) in params.methods.iter().enumerate() {
            let student: Vec<f64> = noise.iter().map(|n| n.students[mi]).collect();
            let d = noise_decomposition(&teacher, &student, &baseline)
                .at(|| format!("run {r}, method {}", method.name()))?;
            out.push_row(vec![
                Cell::count(r),
                Cell::text(method.name()),
                Cell::count(if method == Method::SingleResponse { 1 } else { params.k }),
                num(d.slope),
                num(d.intercept),
                num(d.r_squared),
                num(d.avg_noise),
                num(d.baseline_avg_noise),
                num(d.avg_systematic_noise),
            ])?;
            decomps.push(d);
        }
        let reference = &decomps[single_idx];
        for (mi, d) in decomps.iter().enumerate() {
            if d.avg_systematic_noise < reference.avg_systematic_noise && d.r_squared > reference.r_squared {
                wins[mi] += 1;
            }
        }
    }
    for (mi, &method) in params.methods.iter().enumerate() {
        if mi == single_idx {
            continue;
        }
        let rate = wins[mi] as f64 / params.runs as f64;
        out.summary(&format!("{}_win_rate", method.name()), rate);
        out.assert(
            &format!("{}_beats_single", method.name()),
            rate >= params.win_rate,
            format!(
                "lower systematic noise and higher R² in {} of {} runs (need rate >= {})",
                wins[mi], params.runs, params.win_rate
            ),
        );
    }
    Ok(out.finish())
}
