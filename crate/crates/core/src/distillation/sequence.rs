//! Sequence-level distillation of a tabular student.
//!
//! Single- and multi-response students minimize `L^(k)` on raw teacher
//! samples. The other two methods turn each prompt's `k` samples into
//! per-context target distributions and train by cross-entropy, every
//! context visited by a prompt's samples weighing `1/P`:
//!
//! * averaging: the empirical next-token frequencies at that context;
//! * variance-weighted: `w_T` times those frequencies plus `w_S` times the
//!   initial student's next-token distribution, with inverse-variance
//!   weights from the dispersion of `k` teacher and `k` student samples.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{collect_in_order, student_stream, Method, StrategyConfig, StudentEnsemble, STUDENT_CHILD, TEACHER_CHILD, VARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::models::{sample_sequences, train_sequence_objective, CategoricalSequenceModel, SequenceObjective};
use crate::numkit::AdamConfig;
use crate::oracles::optimal_weights;
use crate::uncertainty::dispersion;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceRecipe {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub teacher_temperature: f64,
    /// Temperature of the student samples behind `σ_S²`.
    pub student_temperature: f64,
}

impl Default for SequenceRecipe {
    fn default() -> Self {
        Self {
            epochs: 300,
            adam: AdamConfig::with_lr(0.05),
            teacher_temperature: 1.0,
            student_temperature: 1.0,
        }
    }
}

/// Training objective for one student given its teacher samples and, for
/// variance weighting, samples from the initial student.
pub fn sequence_objective(
    student_init: &CategoricalSequenceModel,
    prompts: &[Vec<usize>],
    method: Method,
    teacher_samples: &[Vec<Vec<usize>>],
    student_samples: Option<&[Vec<Vec<usize>>]>,
) -> Result<SequenceObjective> {
    match method {
        Method::SingleResponse | Method::MultiResponse => {
            SequenceObjective::multi_response(student_init, prompts, teacher_samples)
        }
        Method::Averaging | Method::VarianceWeighted => {
            if teacher_samples.len() != prompts.len() {
                return Err(Error::dims("one sample set is needed per prompt"));
            }
            let weight = 1.0 / prompts.len() as f64;
            let vocab = student_init.vocab_size();
            let mut obj = SequenceObjective::new(student_init);
            for (p, (prompt, seqs)) in prompts.iter().zip(teacher_samples).enumerate() {
                if seqs.is_empty() {
                    return Err(Error::InsufficientSamples("every prompt needs at least one response".into()));
                }
                let freqs = context_frequencies(student_init, prompt, seqs)?;
                let w_t = if method == Method::VarianceWeighted {
                    let own = student_samples
                        .and_then(|s| s.get(p))
                        .ok_or_else(|| Error::InsufficientSamples("variance weighting needs student samples".into()))?;
                    let var_t = dispersion(seqs, vocab)?;
                    let var_s = dispersion(own, vocab)?;
                    if var_t == 0.0 && var_s == 0.0 {
                        0.5
                    } else {
                        optimal_weights(var_t.max(VARIANCE_FLOOR), var_s.max(VARIANCE_FLOOR))?.0
                    }
                } else {
                    1.0
                };
                for (ctx, freq) in freqs {
                    let target: Vec<f64> = if w_t < 1.0 {
                        let own = student_init.distribution_at(ctx, 1.0);
                        freq.iter().zip(&own).map(|(f, s)| w_t * f + (1.0 - w_t) * s).collect()
                    } else {
                        freq
                    };
                    obj.add_target(ctx, &target, weight)?;
                }
            }
            Ok(obj)
        }
    }
}

/// Empirical next-token distribution at every context the samples visit.
fn context_frequencies(
    model: &CategoricalSequenceModel,
    prompt: &[usize],
    samples: &[Vec<usize>],
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let vocab = model.vocab_size();
    let mut counts: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for seq in samples {
        model.check_tokens(seq)?;
        let mut history = prompt.to_vec();
        for &tok in seq {
            counts.entry(model.context_index(&history)).or_insert_with(|| vec![0.0; vocab])[tok] += 1.0;
            history.push(tok);
        }
    }
    for row in counts.values_mut() {
        let total: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(counts)
}

/// Trains `strategy.students` students from `student_init` on fresh teacher
/// samples. The ensemble carries no prediction matrix; callers evaluate the
/// students on whatever prompts they need.
pub fn distill_sequence_student_ensemble(
    teacher: &CategoricalSequenceModel,
    prompts: &[Vec<usize>],
    strategy: &StrategyConfig,
    student_init: &CategoricalSequenceModel,
    recipe: &SequenceRecipe,
    master_seed: u64,
) -> Result<StudentEnsemble<CategoricalSequenceModel>> {
    strategy.validate()?;
    if prompts.is_empty() {
        return Err(Error::InsufficientSamples("no prompts".into()));
    }
    if teacher.vocab_size() != student_init.vocab_size() {
        return Err(Error::dims("teacher and student vocabularies differ"));
    }
    let k = strategy.responses_drawn();
    let results: Vec<Result<(CategoricalSequenceModel, Vec<f64>)>> = (0..strategy.students)
        .into_par_iter()
        .map(|j| {
            let stream = student_stream(master_seed, j);
            let mut t_rng = stream.child(TEACHER_CHILD);
            let teacher_samples = prompts
                .iter()
                .map(|p| sample_sequences(teacher, p, recipe.teacher_temperature, k, &mut t_rng))
                .collect::<Result<Vec<_>>>()?;
            let student_samples = if strategy.method == Method::VarianceWeighted {
                let mut s_rng = stream.child(STUDENT_CHILD);
                Some(
                    prompts
                        .iter()
                        .map(|p| sample_sequences(student_init, p, recipe.student_temperature, k, &mut s_rng))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            let obj = sequence_objective(
                student_init,
                prompts,
                strategy.method,
                &teacher_samples,
                student_samples.as_deref(),
            )?;
            train_sequence_objective(student_init, &obj, recipe.epochs, recipe.adam)
        })
        .collect();
    let (students, loss_traces) = collect_in_order(results)?.into_iter().unzip();
    Ok(StudentEnsemble {
        students,
        stream_ids: (0..strategy.students as u64).collect(),
        predictions: None,
        loss_traces,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;

    #[test]
    fn multi_with_one_response_matches_single() {
        let teacher = CategoricalSequenceModel::random(4, 1, 3, 1.0, &mut RngStream::new(3, 0)).unwrap();
        let init = CategoricalSequenceModel::uniform(4, 1, 3).unwrap();
        let prompts = vec![vec![], vec![2]];
        let recipe = SequenceRecipe {
            epochs: 40,
            ..SequenceRecipe::default()
        };
        let single = StrategyConfig::new(Method::SingleResponse, 5, 3);
        let multi = StrategyConfig::new(Method::MultiResponse, 1, 3);
        let a = distill_sequence_student_ensemble(&teacher, &prompts, &single, &init, &recipe, 11).unwrap();
        let b = distill_sequence_student_ensemble(&teacher, &prompts, &multi, &init, &recipe, 11).unwrap();
        assert_eq!(a.loss_traces, b.loss_traces);
        assert_eq!(a.students, b.students);
    }

    #[test]
    fn averaging_targets_are_frequencies() {
        let init = CategoricalSequenceModel::uniform(3, 1, 2).unwrap();
        let samples = vec![vec![vec![1, 0], vec![2, 0], vec![1, 1]]];
        let obj = sequence_objective(&init, &[vec![]], Method::Averaging, &samples, None).unwrap();
        let ctxs: Vec<usize> = obj.contexts().collect();
        // Contexts: begin token (3), after token 1, after token 2.
        assert_eq!(ctxs, vec![1, 2, 3]);
        // At the begin context the target is (0, 2/3, 1/3) with weight 1.
        let mut probe = init.clone();
        probe.context_logits_mut(3).copy_from_slice(&[0.0, (2.0f64).ln(), 0.0]);
        let base = obj.loss(&init).unwrap();
        assert!(obj.loss(&probe).unwrap() < base);
    }

    #[test]
    fn variance_weighting_needs_two_responses() {
        let init = CategoricalSequenceModel::uniform(3, 1, 2).unwrap();
        let s = StrategyConfig::new(Method::VarianceWeighted, 1, 2);
        assert!(distill_sequence_student_ensemble(&init, &[vec![]], &s, &init, &SequenceRecipe::default(), 0).is_err());
    }
}
