//! Tabular autoregressive model over a small vocabulary.
//!
//! Token [`EOS`] ends a sequence and is included in it. The next-token
//! distribution depends on the last `context_order` tokens of
//! `prompt ++ generated`, left-padded with a virtual begin token whose id is
//! `vocab_size`. Context `(t_1, …, t_c)`, most recent first, has row index
//! `Σ_j t_j (V+1)^(j-1)` in the logit table, which therefore has
//! `(V+1)^c` rows of `V` logits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{log_sum_exp, BestIterate};
use crate::error::{Error, Result};
use crate::numkit::{Adam, AdamConfig, RngStream};

pub const EOS: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSequenceModel {
    vocab_size: usize,
    context_order: usize,
    max_length: usize,
    logits: Vec<f64>,
}

/// Softmax of `logits / temperature`.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Vec<f64> {
    let mut out: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    super::softmax_in_place(&mut out);
    out
}

fn check_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")))
    }
}

impl CategoricalSequenceModel {
    pub fn new(vocab_size: usize, context_order: usize, max_length: usize, logits: Vec<f64>) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::InvalidConfig("vocabulary needs the end token and at least one other".into()));
        }
        if max_length == 0 {
            return Err(Error::InvalidConfig("max_length must be at least 1".into()));
        }
        let expected = Self::context_count(vocab_size, context_order) * vocab_size;
        if logits.len() != expected {
            return Err(Error::dims(format!("expected {expected} logits, got {}", logits.len())));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("sequence model logits".into()));
        }
        Ok(Self {
            vocab_size,
            context_order,
            max_length,
            logits,
        })
    }

    pub fn uniform(vocab_size: usize, context_order: usize, max_length: usize) -> Result<Self> {
        let n = Self::context_count(vocab_size, context_order) * vocab_size;
        Self::new(vocab_size, context_order, max_length, vec![0.0; n])
    }

    /// Logits i.i.d. `N(0, scale²)`.
    pub fn random(
        vocab_size: usize,
        context_order: usize,
        max_length: usize,
        scale: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let n = Self::context_count(vocab_size, context_order) * vocab_size;
        let logits = (0..n).map(|_| scale * rng.standard_normal()).collect();
        Self::new(vocab_size, context_order, max_length, logits)
    }

    fn context_count(vocab_size: usize, context_order: usize) -> usize {
        (vocab_size + 1).pow(context_order as u32)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_order(&self) -> usize {
        self.context_order
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn num_contexts(&self) -> usize {
        Self::context_count(self.vocab_size, self.context_order)
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn with_logits(&self, logits: Vec<f64>) -> Result<Self> {
        Self::new(self.vocab_size, self.context_order, self.max_length, logits)
    }

    pub fn context_logits(&self, ctx: usize) -> &[f64] {
        &self.logits[ctx * self.vocab_size..(ctx + 1) * self.vocab_size]
    }

    pub fn context_logits_mut(&mut self, ctx: usize) -> &mut [f64] {
        &mut self.logits[ctx * self.vocab_size..(ctx + 1) * self.vocab_size]
    }

    pub fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.vocab_size) {
            Some(&token) => Err(Error::InvalidToken {
                token,
                vocab_size: self.vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Row index of the context ending `history`.
    pub fn context_index(&self, history: &[usize]) -> usize {
        let base = self.vocab_size + 1;
        let mut idx = 0;
        let mut scale = 1;
        for j in 0..self.context_order {
            let tok = if j < history.len() {
                history[history.len() - 1 - j]
            } else {
                self.vocab_size
            };
            idx += tok * scale;
            scale *= base;
        }
        idx
    }

    pub fn distribution_at(&self, ctx: usize, temperature: f64) -> Vec<f64> {
        softmax_with_temperature(self.context_logits(ctx), temperature)
    }

    pub fn next_token_distribution(&self, history: &[usize], temperature: f64) -> Result<Vec<f64>> {
        check_temperature(temperature)?;
        self.check_tokens(history)?;
        Ok(self.distribution_at(self.context_index(history), temperature))
    }

    /// Highest-probability continuation; ties go to the lowest token id.
    pub fn greedy(&self, prompt: &[usize]) -> Result<Vec<usize>> {
        self.check_tokens(prompt)?;
        let mut history = prompt.to_vec();
        let mut out = Vec::new();
        while out.len() < self.max_length {
            let row = self.context_logits(self.context_index(&history));
            let tok = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                .0;
            out.push(tok);
            history.push(tok);
            if tok == EOS {
                break;
            }
        }
        Ok(out)
    }

    /// Every completion of `prompt` with its probability at `temperature`.
    /// Sequences with probability exactly zero are omitted.
    pub fn enumerate(&self, prompt: &[usize], temperature: f64) -> Result<Vec<(Vec<usize>, f64)>> {
        check_temperature(temperature)?;
        self.check_tokens(prompt)?;
        let mut out = Vec::new();
        let mut history = prompt.to_vec();
        self.enumerate_from(&mut history, prompt.len(), 1.0, temperature, &mut out);
        Ok(out)
    }

    fn enumerate_from(
        &self,
        history: &mut Vec<usize>,
        prompt_len: usize,
        prob: f64,
        temperature: f64,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        let dist = self.distribution_at(self.context_index(history), temperature);
        for (tok, &p) in dist.iter().enumerate() {
            let q = prob * p;
            if q == 0.0 {
                continue;
            }
            history.push(tok);
            if tok == EOS || history.len() - prompt_len == self.max_length {
                out.push((history[prompt_len..].to_vec(), q));
            } else {
                self.enumerate_from(history, prompt_len, q, temperature, out);
            }
            history.pop();
        }
    }

    /// Entropy in nats of the full completion distribution.
    pub fn sequence_entropy(&self, prompt: &[usize], temperature: f64) -> Result<f64> {
        Ok(self
            .enumerate(prompt, temperature)?
            .iter()
            .map(|(_, p)| -p * p.ln())
            .sum())
    }

    fn sample_one(&self, prompt: &[usize], temperature: f64, rng: &mut RngStream) -> Vec<usize> {
        let mut history = prompt.to_vec();
        let mut out = Vec::with_capacity(self.max_length);
        while out.len() < self.max_length {
            let dist = self.distribution_at(self.context_index(&history), temperature);
            let tok = rng.categorical(&dist);
            out.push(tok);
            history.push(tok);
            if tok == EOS {
                break;
            }
        }
        out
    }
}

/// `count` independent completions of `prompt`, sampled autoregressively
/// from `softmax(logits / temperature)`.
pub fn sample_sequences(
    model: &CategoricalSequenceModel,
    prompt: &[usize],
    temperature: f64,
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<Vec<usize>>> {
    check_temperature(temperature)?;
    model.check_tokens(prompt)?;
    Ok((0..count).map(|_| model.sample_one(prompt, temperature, rng)).collect())
}

/// `log p(sequence | prompt)` at unit temperature.
pub fn sequence_log_prob(model: &CategoricalSequenceModel, prompt: &[usize], sequence: &[usize]) -> Result<f64> {
    model.check_tokens(prompt)?;
    model.check_tokens(sequence)?;
    let mut history = prompt.to_vec();
    let mut total = 0.0;
    for &tok in sequence {
        let row = model.context_logits(model.context_index(&history));
        total += row[tok] - log_sum_exp(row);
        history.push(tok);
    }
    Ok(total)
}

/// Weighted cross-entropy against per-context target distributions,
/// `Σ_ctx Σ_j -A[ctx][j] log p(j | ctx)`.
///
/// Cross-entropy is linear in the target, so every term is folded into the
/// accumulated target mass `A[ctx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceObjective {
    vocab_size: usize,
    num_contexts: usize,
    mass: BTreeMap<usize, Vec<f64>>,
}

impl SequenceObjective {
    pub fn new(model: &CategoricalSequenceModel) -> Self {
        Self {
            vocab_size: model.vocab_size(),
            num_contexts: model.num_contexts(),
            mass: BTreeMap::new(),
        }
    }

    /// Adds `-weight · log p(sequence | prompt)`.
    pub fn add_sequence(
        &mut self,
        model: &CategoricalSequenceModel,
        prompt: &[usize],
        sequence: &[usize],
        weight: f64,
    ) -> Result<()> {
        model.check_tokens(prompt)?;
        model.check_tokens(sequence)?;
        let mut history = prompt.to_vec();
        for &tok in sequence {
            let ctx = model.context_index(&history);
            self.row(ctx)[tok] += weight;
            history.push(tok);
        }
        Ok(())
    }

    /// Adds `weight · CE(target, p(· | ctx))`.
    pub fn add_target(&mut self, ctx: usize, target: &[f64], weight: f64) -> Result<()> {
        if ctx >= self.num_contexts || target.len() != self.vocab_size {
            return Err(Error::dims(format!(
                "target for context {ctx} has length {}, expected {} (contexts {})",
                target.len(),
                self.vocab_size,
                self.num_contexts
            )));
        }
        if target.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::NotADistribution("negative target probability".into()));
        }
        for (m, &t) in self.row(ctx).iter_mut().zip(target) {
            *m += weight * t;
        }
        Ok(())
    }

    /// `(1/P) Σ_prompts (1/k) Σ_i -log p(y_i | prompt)`.
    pub fn multi_response(
        model: &CategoricalSequenceModel,
        prompts: &[Vec<usize>],
        samples: &[Vec<Vec<usize>>],
    ) -> Result<Self> {
        if prompts.len() != samples.len() {
            return Err(Error::dims(format!("{} prompts but {} sample sets", prompts.len(), samples.len())));
        }
        let mut obj = Self::new(model);
        for (prompt, seqs) in prompts.iter().zip(samples) {
            if seqs.is_empty() {
                return Err(Error::InsufficientSamples("every prompt needs at least one response".into()));
            }
            let w = 1.0 / (prompts.len() as f64 * seqs.len() as f64);
            for seq in seqs {
                obj.add_sequence(model, prompt, seq, w)?;
            }
        }
        Ok(obj)
    }

    fn row(&mut self, ctx: usize) -> &mut Vec<f64> {
        let v = self.vocab_size;
        self.mass.entry(ctx).or_insert_with(|| vec![0.0; v])
    }

    /// Contexts carrying target mass, ascending.
    pub fn contexts(&self) -> impl Iterator<Item = usize> + '_ {
        self.mass.keys().copied()
    }

    fn check_model(&self, model: &CategoricalSequenceModel) -> Result<()> {
        if model.vocab_size() != self.vocab_size || model.num_contexts() != self.num_contexts {
            return Err(Error::dims("objective was built for a different model shape"));
        }
        Ok(())
    }

    pub fn loss(&self, model: &CategoricalSequenceModel) -> Result<f64> {
        self.check_model(model)?;
        Ok(self
            .mass
            .iter()
            .map(|(&ctx, a)| {
                let row = model.context_logits(ctx);
                let lse = log_sum_exp(row);
                a.iter().zip(row).map(|(&m, &l)| m * (lse - l)).sum::<f64>()
            })
            .sum())
    }

    /// Loss and gradient with respect to the full logit table.
    pub fn loss_and_grad(&self, model: &CategoricalSequenceModel) -> Result<(f64, Vec<f64>)> {
        self.check_model(model)?;
        let v = self.vocab_size;
        let mut grad = vec![0.0; model.logits().len()];
        let mut loss = 0.0;
        for (&ctx, a) in &self.mass {
            let row = model.context_logits(ctx);
            let lse = log_sum_exp(row);
            let total: f64 = a.iter().sum();
            let g = &mut grad[ctx * v..(ctx + 1) * v];
            for j in 0..v {
                loss += a[j] * (lse - row[j]);
                g[j] = total * (row[j] - lse).exp() - a[j];
            }
        }
        Ok((loss, grad))
    }
}

/// Full-batch Adam on `objective`. Returns the lowest-loss iterate and the
/// per-epoch loss trace.
pub fn train_sequence_objective(
    init: &CategoricalSequenceModel,
    objective: &SequenceObjective,
    epochs: usize,
    adam: AdamConfig,
) -> Result<(CategoricalSequenceModel, Vec<f64>)> {
    if epochs == 0 {
        return Err(Error::InvalidConfig("training needs at least one epoch".into()));
    }
    adam.validate()?;
    let mut model = init.clone();
    let mut opt = Adam::new(adam, model.logits.len());
    let mut trace = Vec::with_capacity(epochs + 1);
    let mut best: Option<BestIterate> = None;
    for epoch in 0..=epochs {
        let (loss, grad) = objective.loss_and_grad(&model)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(loss);
        match best.as_mut() {
            Some(b) => b.offer(loss, &model.logits),
            None => best = Some(BestIterate::new(loss, &model.logits)),
        }
        if epoch < epochs {
            opt.step(&mut model.logits, &grad);
        }
    }
    model.logits = best.expect("evaluated").params;
    Ok((model, trace))
}

/// Minimizes the multi-response objective `L^(k)` averaged over prompts.
pub fn train_sequence_student(
    init: &CategoricalSequenceModel,
    prompts: &[Vec<usize>],
    teacher_samples: &[Vec<Vec<usize>>],
    epochs: usize,
    lr: f64,
) -> Result<CategoricalSequenceModel> {
    let obj = SequenceObjective::multi_response(init, prompts, teacher_samples)?;
    train_sequence_objective(init, &obj, epochs, AdamConfig::with_lr(lr)).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{finite_diff_grad, max_abs_diff};

    #[test]
    fn context_indexing_pads_with_begin_token() {
        let m = CategoricalSequenceModel::uniform(3, 2, 4).unwrap();
        assert_eq!(m.num_contexts(), 16);
        assert_eq!(m.context_index(&[]), 3 + 3 * 4);
        assert_eq!(m.context_index(&[2]), 2 + 3 * 4);
        assert_eq!(m.context_index(&[1, 2]), 2 + 4);
        assert_eq!(m.context_index(&[0, 1, 2]), 2 + 4);
    }

    #[test]
    fn enumeration_normalizes() {
        let m = CategoricalSequenceModel::random(3, 1, 2, 1.5, &mut RngStream::new(1, 0)).unwrap();
        let all = m.enumerate(&[], 1.0).unwrap();
        let total: f64 = all.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for (seq, p) in &all {
            let lp = sequence_log_prob(&m, &[], seq).unwrap();
            assert!((lp.exp() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_tokens_are_rejected() {
        let m = CategoricalSequenceModel::uniform(3, 1, 2).unwrap();
        assert_eq!(
            sequence_log_prob(&m, &[], &[1, 3]).unwrap_err(),
            Error::InvalidToken { token: 3, vocab_size: 3 }
        );
        assert!(sample_sequences(&m, &[5], 1.0, 1, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(6, 0);
        let m = CategoricalSequenceModel::random(3, 2, 3, 1.0, &mut rng).unwrap();
        let samples = vec![sample_sequences(&m, &[], 1.0, 4, &mut rng).unwrap()];
        let obj = SequenceObjective::multi_response(&m, &[vec![]], &samples).unwrap();
        let (_, g) = obj.loss_and_grad(&m).unwrap();
        let fd = finite_diff_grad(|l| obj.loss(&m.with_logits(l.to_vec()).unwrap()).unwrap(), m.logits(), 1e-6).unwrap();
        assert!(max_abs_diff(&g, &fd) < 1e-6);
    }

    #[test]
    fn training_reduces_objective() {
        let mut rng = RngStream::new(2, 0);
        let teacher = CategoricalSequenceModel::random(4, 1, 3, 2.0, &mut rng).unwrap();
        let prompts = vec![vec![], vec![1], vec![2, 3]];
        let samples: Vec<_> = prompts
            .iter()
            .map(|p| sample_sequences(&teacher, p, 1.0, 5, &mut rng).unwrap())
            .collect();
        let init = CategoricalSequenceModel::uniform(4, 1, 3).unwrap();
        let obj = SequenceObjective::multi_response(&init, &prompts, &samples).unwrap();
        let trained = train_sequence_student(&init, &prompts, &samples, 100, 0.05).unwrap();
        assert!(obj.loss(&trained).unwrap() < obj.loss(&init).unwrap());
    }
}
