//! Recursive cascade drafting step, the outer generation loops, and run
//! accounting.
//!
//! Levels are numbered from the top: level 0 is the target, level `i` is the
//! `i`-th draft. The k-matrix row for level `i` lists one budget per smaller
//! draft; stage `j` of that row accumulates at least `k[i][i + j]` tokens from
//! recursive calls reviewed by draft `i + j + 1`, which in turn draws on the
//! drafts below it. A level with no drafts below proposes directly.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    choose, sd_step_in_place, speculative_review, DecodeMode, DraftBatch, Lenience, ReviewOutcome,
};
use crate::model::{next_distribution, LanguageModel};
use crate::rng::RandomSource;
use crate::vocab::{TokenId, TokenSeq};

/// Upper-triangular table of per-level, per-stage draft budgets.
///
/// Entries below the diagonal are ignored. A zero entry skips that stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct KMatrix {
    rows: Vec<Vec<usize>>,
}

impl KMatrix {
    pub fn new(rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        if let Some(i) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::contract(format!(
                "k-matrix row {i} has {} entries, expected {n}",
                rows[i].len()
            )));
        }
        Ok(KMatrix { rows })
    }

    /// The matrix for a single draft level: `[[k]]`.
    pub fn single(k: usize) -> Self {
        KMatrix { rows: vec![vec![k]] }
    }

    pub fn empty() -> Self {
        KMatrix { rows: Vec::new() }
    }

    /// Number of draft levels the matrix drives.
    pub fn levels(&self) -> usize {
        self.rows.len()
    }

    /// Stage budgets for the reviewer at `level`.
    pub fn stages(&self, level: usize) -> &[usize] {
        &self.rows[level][level..]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }
}

impl TryFrom<Vec<Vec<usize>>> for KMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<usize>>) -> Result<Self> {
        KMatrix::new(rows)
    }
}

impl From<KMatrix> for Vec<Vec<usize>> {
    fn from(k: KMatrix) -> Self {
        k.rows
    }
}

/// Output length limits shared by every generation loop.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Budget {
    pub max_new_tokens: usize,
    pub stop_tokens: BTreeSet<TokenId>,
}

impl Budget {
    pub fn new(max_new_tokens: usize) -> Self {
        Budget {
            max_new_tokens,
            stop_tokens: BTreeSet::new(),
        }
    }

    pub fn with_stop_tokens(mut self, stops: impl IntoIterator<Item = TokenId>) -> Self {
        self.stop_tokens.extend(stops);
        self
    }
}

#[derive(Clone)]
pub struct CascadeConfig {
    pub target: Arc<dyn LanguageModel>,
    /// Largest to smallest.
    pub drafts: Vec<Arc<dyn LanguageModel>>,
    pub k_matrix: KMatrix,
    /// Applied at internal reviews only; the target always reviews strictly.
    pub lenience: Lenience,
    pub mode: DecodeMode,
    pub budget: Budget,
    pub seed: u64,
    /// Permit internal lenience in sampling mode, which no longer preserves
    /// the target distribution.
    pub allow_inexact_sampling: bool,
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_matrix.levels() != self.drafts.len() {
            return Err(Error::Config(format!(
                "k-matrix has {} rows for {} draft models",
                self.k_matrix.levels(),
                self.drafts.len()
            )));
        }
        let v = self.target.vocab().size();
        for d in &self.drafts {
            if d.vocab().size() != v {
                return Err(Error::Config(format!(
                    "draft {} has vocabulary size {}, target {} has {v}",
                    d.descriptor(),
                    d.vocab().size(),
                    self.target.descriptor()
                )));
            }
        }
        if self.mode == DecodeMode::Sampling
            && !self.lenience.is_strict()
            && !self.allow_inexact_sampling
        {
            return Err(Error::Config(
                "internal lenience in sampling mode alters the output distribution; \
                 set allow_inexact_sampling to permit it"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// One review at some level of the cascade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub level: usize,
    pub stage: usize,
    pub model: String,
    pub proposed: usize,
    pub accepted: usize,
    pub positional_accept: Vec<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub target: String,
    pub steps: Vec<StageRecord>,
    pub calls_per_model: BTreeMap<String, u64>,
    pub cost_weights: BTreeMap<String, f64>,
    pub cost_units: f64,
    pub tokens_emitted: usize,
    /// Number of top-level iterations of the generation loop.
    pub outer_steps: usize,
    pub warnings: Vec<String>,
}

impl GenerationTrace {
    fn for_target(target: &dyn LanguageModel) -> Self {
        GenerationTrace {
            target: target.descriptor().to_string(),
            ..Default::default()
        }
    }

    pub fn record_call(&mut self, model: &dyn LanguageModel) {
        let name = model.descriptor();
        *self.calls_per_model.entry(name.to_string()).or_insert(0) += 1;
        self.cost_weights
            .entry(name.to_string())
            .or_insert_with(|| model.cost_weight());
        self.cost_units += model.cost_weight();
    }

    pub fn calls(&self, descriptor: &str) -> u64 {
        self.calls_per_model.get(descriptor).copied().unwrap_or(0)
    }

    pub fn target_calls(&self) -> u64 {
        self.calls(&self.target)
    }

    /// Reviews performed by the target model.
    pub fn outer_reviews(&self) -> impl Iterator<Item = &StageRecord> {
        self.steps.iter().filter(|s| s.level == 0)
    }

    fn record_review(&mut self, level: usize, stage: usize, model: &str, out: &ReviewOutcome) {
        self.steps.push(StageRecord {
            level,
            stage,
            model: model.to_string(),
            proposed: out.proposed,
            accepted: out.accepted_count,
            positional_accept: out.positional_accept(),
        });
    }

    fn warn_nondeterministic(&mut self, models: &[&dyn LanguageModel], mode: DecodeMode) {
        if mode != DecodeMode::Greedy {
            return;
        }
        for m in models {
            if !m.is_deterministic() {
                self.warnings.push(format!(
                    "model {} reports non-deterministic scoring; greedy equivalence is not guaranteed",
                    m.descriptor()
                ));
            }
        }
    }
}

struct Cascade<'a> {
    /// Target first, then drafts largest to smallest.
    models: Vec<&'a dyn LanguageModel>,
    k_matrix: &'a KMatrix,
    lenience: Lenience,
    mode: DecodeMode,
    rng: &'a mut RandomSource,
    trace: &'a mut GenerationTrace,
}

impl Cascade<'_> {
    /// Runs the step with `models[level]` as reviewer over `seq`, which is
    /// restored before returning. The returned batch carries the reviewer's
    /// distribution for every token.
    fn step(&mut self, level: usize, stage: usize, seq: &mut Vec<TokenId>, outermost: bool) -> Result<DraftBatch> {
        let reviewer = self.models[level];
        if level + 1 == self.models.len() {
            return self.propose_directly(reviewer, seq);
        }

        let entry_len = seq.len();
        let mut batch = DraftBatch {
            proposal_dists: Some(Vec::new()),
            ..Default::default()
        };
        let result = (|| {
            for (i, &budget) in self.k_matrix.stages(level).iter().enumerate() {
                let stage_start = seq.len();
                while seq.len() - stage_start < budget {
                    let part = self.step(level + 1 + i, i, seq, false)?;
                    seq.extend_from_slice(&part.tokens);
                    batch.extend(part);
                }
            }
            self.trace.record_call(reviewer);
            reviewer.evaluate(seq, entry_len + 1)
        })();
        seq.truncate(entry_len);
        let dists = result?;

        let lenience = if outermost { Lenience::STRICT } else { self.lenience };
        let out = speculative_review(&dists, &batch, lenience, self.mode, self.rng)?;
        self.trace.record_review(level, stage, reviewer.descriptor(), &out);
        Ok(DraftBatch {
            tokens: out.emitted,
            proposal_probs: out.emitted_probs,
            proposal_dists: Some(out.emitted_dists),
        })
    }

    /// Base case: the model generates its proposal span on its own; one call.
    fn propose_directly(&mut self, model: &dyn LanguageModel, seq: &mut Vec<TokenId>) -> Result<DraftBatch> {
        self.trace.record_call(model);
        let entry_len = seq.len();
        let mut batch = DraftBatch::default();
        let mut result = Ok(());
        for _ in 0..model.proposal_span().max(1) {
            match next_distribution(model, seq) {
                Ok(dist) => {
                    let token = choose(&dist, self.mode, self.rng);
                    seq.push(token);
                    batch.push(token, dist);
                }
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        seq.truncate(entry_len);
        result.map(|()| batch)
    }
}

/// One cascade step reviewed by `reviewer` over `prefix`. Returns the emitted
/// tokens with the reviewer's probability of each.
#[allow(clippy::too_many_arguments)]
pub fn csd_step(
    reviewer: &dyn LanguageModel,
    drafts: &[&dyn LanguageModel],
    prefix: &[TokenId],
    k_matrix: &KMatrix,
    lenience: Lenience,
    is_outermost: bool,
    mode: DecodeMode,
    rng: &mut RandomSource,
    trace: &mut GenerationTrace,
) -> Result<(TokenSeq, Vec<f64>)> {
    if prefix.is_empty() {
        return Err(Error::contract("cascade step needs a non-empty prefix"));
    }
    if k_matrix.levels() != drafts.len() {
        return Err(Error::contract(format!(
            "k-matrix has {} rows for {} drafts",
            k_matrix.levels(),
            drafts.len()
        )));
    }
    let mut models = Vec::with_capacity(drafts.len() + 1);
    models.push(reviewer);
    models.extend_from_slice(drafts);
    let mut cascade = Cascade {
        models,
        k_matrix,
        lenience,
        mode,
        rng,
        trace,
    };
    let mut seq = prefix.to_vec();
    let batch = cascade.step(0, 0, &mut seq, is_outermost)?;
    Ok((batch.tokens, batch.proposal_probs))
}

/// Appends `tokens` to `output` within the budget. Returns false once
/// generation must stop.
fn append_within_budget(output: &mut Vec<TokenId>, prompt_len: usize, tokens: &[TokenId], budget: &Budget) -> bool {
    for &t in tokens {
        if output.len() - prompt_len >= budget.max_new_tokens {
            return false;
        }
        output.push(t);
        if budget.stop_tokens.contains(&t) {
            return false;
        }
    }
    output.len() - prompt_len < budget.max_new_tokens
}

/// Full cascade generation from `prompt`.
pub fn generate(config: &CascadeConfig, prompt: &[TokenId]) -> Result<(TokenSeq, GenerationTrace)> {
    config.validate()?;
    if prompt.is_empty() {
        return Err(Error::contract("generation needs a non-empty prompt"));
    }
    config.target.vocab().check(prompt)?;

    let mut trace = GenerationTrace::for_target(config.target.as_ref());
    let mut rng = RandomSource::new(config.seed);
    let mut models: Vec<&dyn LanguageModel> = vec![config.target.as_ref()];
    models.extend(config.drafts.iter().map(|d| d.as_ref()));
    trace.warn_nondeterministic(&models, config.mode);

    let mut output = prompt.to_vec();
    if config.budget.max_new_tokens > 0 {
        let mut cascade = Cascade {
            models,
            k_matrix: &config.k_matrix,
            lenience: config.lenience,
            mode: config.mode,
            rng: &mut rng,
            trace: &mut trace,
        };
        loop {
            let batch = cascade.step(0, 0, &mut output, true)?;
            cascade.trace.outer_steps += 1;
            if !append_within_budget(&mut output, prompt.len(), &batch.tokens, &config.budget) {
                break;
            }
        }
    }
    trace.tokens_emitted = output.len() - prompt.len();
    Ok((output, trace))
}

/// Target-only generation: one call per emitted token.
pub fn autoregressive_generate(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    budget: &Budget,
    mode: DecodeMode,
    rng: &mut RandomSource,
) -> Result<(TokenSeq, GenerationTrace)> {
    let mut trace = GenerationTrace::for_target(model);
    trace.warn_nondeterministic(&[model], mode);
    let mut output = prompt.to_vec();
    if budget.max_new_tokens > 0 {
        loop {
            trace.record_call(model);
            let token = choose(&next_distribution(model, &output)?, mode, rng);
            trace.outer_steps += 1;
            if !append_within_budget(&mut output, prompt.len(), &[token], budget) {
                break;
            }
        }
    }
    trace.tokens_emitted = output.len() - prompt.len();
    Ok((output, trace))
}

/// Vanilla speculative decoding loop over [`sd_step_in_place`].
#[allow(clippy::too_many_arguments)]
pub fn sd_generate(
    target: &dyn LanguageModel,
    draft: &dyn LanguageModel,
    k: usize,
    lenience: Lenience,
    prompt: &[TokenId],
    budget: &Budget,
    mode: DecodeMode,
    rng: &mut RandomSource,
) -> Result<(TokenSeq, GenerationTrace)> {
    let mut trace = GenerationTrace::for_target(target);
    trace.warn_nondeterministic(&[target, draft], mode);
    let mut output = prompt.to_vec();
    if budget.max_new_tokens > 0 {
        loop {
            let out = sd_step_in_place(target, draft, k, lenience, &mut output, mode, rng)?;
            for _ in 0..k {
                trace.record_call(draft);
            }
            trace.record_call(target);
            trace.record_review(0, 0, target.descriptor(), &out);
            trace.outer_steps += 1;
            if !append_within_budget(&mut output, prompt.len(), &out.emitted, budget) {
                break;
            }
        }
    }
    trace.tokens_emitted = output.len() - prompt.len();
    Ok((output, trace))
}
