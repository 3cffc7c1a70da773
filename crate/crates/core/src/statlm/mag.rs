use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::BigramTable;
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::model::{check_start, LanguageModel};
use crate::vocab::{TokenId, TokenSeq, Vocab};

/// Tokens proposed per Max-Gram call.
pub const DEFAULT_SPAN: usize = 10;

/// Where Max-Gram looks for matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MatchPolicy {
    /// Only the prompt; requires the model to be bound to a prompt length.
    #[serde(rename = "prompt")]
    PromptOnly,
    /// The prompt plus everything generated so far.
    #[default]
    #[serde(rename = "prompt+generation")]
    PromptAndGeneration,
}

/// Longest suffix of `generated` that occurs contiguously in `corpus`, as
/// `(start, len)`. Among equally long matches the lowest start wins.
pub fn longest_suffix_match(generated: &[TokenId], corpus: &[TokenId]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let g = generated.len();
    for end in 0..corpus.len() {
        let mut len = 0;
        while len < g && len <= end && corpus[end - len] == generated[g - 1 - len] {
            len += 1;
        }
        // Later ends only replace a match when strictly longer.
        if len > 0 && best.map_or(true, |(_, best_len)| len > best_len) {
            best = Some((end + 1 - len, len));
        }
    }
    best
}

/// Up to `n` corpus tokens following the first occurrence of the longest
/// suffix match. `None` when the last generated token never occurs; an empty
/// or short result when the match runs into the end of the corpus.
pub fn mag_propose(generated: &[TokenId], corpus: &[TokenId], n: usize) -> Option<TokenSeq> {
    if generated.is_empty() || n == 0 {
        return None;
    }
    let (start, len) = longest_suffix_match(generated, corpus)?;
    let from = start + len;
    let to = (from + n).min(corpus.len());
    Some(corpus[from..to].to_vec())
}

/// Max-Gram drafter: copies the continuation of the longest suffix match,
/// falling back to a bigram row when nothing follows a match.
#[derive(Debug, Clone)]
pub struct MagModel {
    pub(crate) name: String,
    pub(crate) fallback: Arc<BigramTable>,
    pub(crate) span: usize,
    pub(crate) policy: MatchPolicy,
    pub(crate) prompt_len: Option<usize>,
}

impl MagModel {
    pub fn new(fallback: Arc<BigramTable>) -> Self {
        MagModel {
            name: "mag".into(),
            fallback,
            span: DEFAULT_SPAN,
            policy: MatchPolicy::default(),
            prompt_len: None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_span(mut self, span: usize) -> Result<Self> {
        if span == 0 {
            return Err(Error::Config("Max-Gram span must be at least 1".into()));
        }
        self.span = span;
        Ok(self)
    }

    pub fn with_policy(mut self, policy: MatchPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Fixes the prompt length used by [`MatchPolicy::PromptOnly`].
    pub fn bind_prompt(&self, prompt_len: usize) -> Self {
        MagModel {
            prompt_len: Some(prompt_len),
            ..self.clone()
        }
    }

    pub fn span(&self) -> usize {
        self.span
    }

    pub fn policy(&self) -> MatchPolicy {
        self.policy
    }

    pub fn fallback(&self) -> &BigramTable {
        &self.fallback
    }

    /// Copied next token for `context`, if a match has a continuation.
    pub fn copy_next(&self, context: &[TokenId]) -> Result<Option<TokenId>> {
        if context.len() < 2 {
            return Ok(None);
        }
        let history = &context[..context.len() - 1];
        Ok(match self.policy {
            // The continuation is read from the context itself, so a match
            // ending just before the last token still has a successor.
            MatchPolicy::PromptAndGeneration => {
                longest_suffix_match(context, history).map(|(s, l)| context[s + l])
            }
            MatchPolicy::PromptOnly => {
                let prompt_len = self.prompt_len.ok_or_else(|| {
                    Error::contract("prompt-only Max-Gram used without a bound prompt length")
                })?;
                let corpus = &context[..prompt_len.min(history.len())];
                mag_propose(context, corpus, 1).and_then(|next| next.first().copied())
            }
        })
    }

    fn next(&self, context: &[TokenId]) -> Result<Distribution> {
        Ok(match self.copy_next(context)? {
            Some(t) => Distribution::point_mass(self.fallback.vocab.size(), t),
            None => match context.last() {
                Some(&prev) => self.fallback.row(prev),
                None => Distribution::uniform(self.fallback.vocab.size()),
            },
        })
    }
}

impl LanguageModel for MagModel {
    fn vocab(&self) -> &Vocab {
        &self.fallback.vocab
    }
    fn descriptor(&self) -> &str {
        &self.name
    }
    fn cost_weight(&self) -> f64 {
        0.0
    }
    fn evaluate(&self, tokens: &[TokenId], start: usize) -> Result<Vec<Distribution>> {
        check_start(tokens, start)?;
        (start..=tokens.len() + 1)
            .map(|p| self.next(&tokens[..p - 1]))
            .collect()
    }
    fn proposal_span(&self) -> usize {
        self.span
    }
}
