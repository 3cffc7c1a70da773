use std::sync::Arc;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocab};

/// Parallel scoring of a token sequence.
///
/// Positions are 1-based: the distribution for position `p` predicts the
/// `p`-th token from `tokens[..p - 1]`. `evaluate(tokens, start)` returns one
/// distribution for every `p` in `start..=tokens.len() + 1`, so the last
/// entry always predicts the token after the sequence.
///
/// Implementations are immutable once built and must return the same
/// distributions for the same arguments.
pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> &Vocab;

    /// Stable name used in traces and cost tables.
    fn descriptor(&self) -> &str;

    /// Cost of one forward run, in the units of the active cost model.
    fn cost_weight(&self) -> f64;

    fn evaluate(&self, tokens: &[TokenId], start: usize) -> Result<Vec<Distribution>>;

    /// Tokens produced by one direct proposal when this model sits at the
    /// bottom of a cascade.
    fn proposal_span(&self) -> usize {
        1
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Arc<M> {
    fn vocab(&self) -> &Vocab {
        (**self).vocab()
    }
    fn descriptor(&self) -> &str {
        (**self).descriptor()
    }
    fn cost_weight(&self) -> f64 {
        (**self).cost_weight()
    }
    fn evaluate(&self, tokens: &[TokenId], start: usize) -> Result<Vec<Distribution>> {
        (**self).evaluate(tokens, start)
    }
    fn proposal_span(&self) -> usize {
        (**self).proposal_span()
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
}

/// Checks `1 <= start <= len + 1`.
pub fn check_start(tokens: &[TokenId], start: usize) -> Result<()> {
    if start == 0 || start > tokens.len() + 1 {
        return Err(Error::contract(format!(
            "evaluate start {start} outside 1..={}",
            tokens.len() + 1
        )));
    }
    Ok(())
}

/// Distribution of the token following `tokens`.
pub fn next_distribution<M: LanguageModel + ?Sized>(
    model: &M,
    tokens: &[TokenId],
) -> Result<Distribution> {
    let mut dists = model.evaluate(tokens, tokens.len() + 1)?;
    dists
        .pop()
        .ok_or_else(|| Error::contract(format!("{} returned no distribution", model.descriptor())))
}

/// A model that ignores its context.
#[derive(Debug, Clone)]
pub struct ContextFreeModel {
    name: String,
    vocab: Vocab,
    dist: Distribution,
    cost_weight: f64,
}

impl ContextFreeModel {
    pub fn new(name: impl Into<String>, dist: Distribution, cost_weight: f64) -> Self {
        ContextFreeModel {
            name: name.into(),
            vocab: Vocab::anonymous(dist.len()),
            dist,
            cost_weight,
        }
    }

    pub fn distribution(&self) -> &Distribution {
        &self.dist
    }
}

impl LanguageModel for ContextFreeModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }
    fn descriptor(&self) -> &str {
        &self.name
    }
    fn cost_weight(&self) -> f64 {
        self.cost_weight
    }
    fn evaluate(&self, tokens: &[TokenId], start: usize) -> Result<Vec<Distribution>> {
        check_start(tokens, start)?;
        Ok(vec![self.dist.clone(); tokens.len() + 2 - start])
    }
}
