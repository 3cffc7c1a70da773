//! Single speculative review: accept/reject a batch of proposed tokens
//! against a reviewer's distributions, with optional lenience.

use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::model::{next_distribution, LanguageModel};
use crate::rng::RandomSource;
use crate::vocab::{TokenId, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Sampling,
    Greedy,
}

/// Factor `l >= 1` loosening the acceptance test.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Lenience(f64);

impl Lenience {
    pub const STRICT: Lenience = Lenience(1.0);

    pub fn new(l: f64) -> Result<Self> {
        if l.is_nan() || l < 1.0 {
            return Err(Error::Config(format!("lenience must be >= 1, got {l}")));
        }
        Ok(Lenience(l))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_strict(self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for Lenience {
    type Error = Error;
    fn try_from(l: f64) -> Result<Self> {
        Lenience::new(l)
    }
}

impl From<Lenience> for f64 {
    fn from(l: Lenience) -> f64 {
        l.0
    }
}

impl Default for Lenience {
    fn default() -> Self {
        Lenience::STRICT
    }
}

/// Proposed tokens together with the proposer's probabilities.
#[derive(Debug, Clone, Default)]
pub struct DraftBatch {
    pub tokens: TokenSeq,
    pub proposal_probs: Vec<f64>,
    /// Full proposer distributions, required for residual resampling.
    pub proposal_dists: Option<Vec<Distribution>>,
}

impl DraftBatch {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn with_dists(tokens: TokenSeq, dists: Vec<Distribution>) -> Self {
        let proposal_probs = tokens.iter().zip(&dists).map(|(t, d)| d.prob(*t)).collect();
        DraftBatch {
            tokens,
            proposal_probs,
            proposal_dists: Some(dists),
        }
    }

    pub fn push(&mut self, token: TokenId, dist: Distribution) {
        self.proposal_probs.push(dist.prob(token));
        self.tokens.push(token);
        self.proposal_dists.get_or_insert_with(Vec::new).push(dist);
    }

    pub fn extend(&mut self, other: DraftBatch) {
        self.tokens.extend(other.tokens);
        self.proposal_probs.extend(other.proposal_probs);
        match (&mut self.proposal_dists, other.proposal_dists) {
            (Some(mine), Some(theirs)) => mine.extend(theirs),
            (slot @ None, Some(theirs)) if self.tokens.len() == theirs.len() => *slot = Some(theirs),
            _ => self.proposal_dists = None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.proposal_probs.len() {
            return Err(Error::contract(format!(
                "draft has {} tokens but {} proposal probabilities",
                self.tokens.len(),
                self.proposal_probs.len()
            )));
        }
        if let Some(i) = self.proposal_probs.iter().position(|q| !(*q > 0.0 && *q <= 1.0)) {
            return Err(Error::contract(format!(
                "proposal probability {} at draft position {i}",
                self.proposal_probs[i]
            )));
        }
        if let Some(dists) = &self.proposal_dists {
            if dists.len() != self.tokens.len() {
                return Err(Error::contract("proposal distributions misaligned with draft"));
            }
        }
        Ok(())
    }
}

/// Result of reviewing one draft batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewOutcome {
    pub accepted_count: usize,
    /// Accepted tokens followed by exactly one correction or bonus token.
    pub emitted: TokenSeq,
    /// Reviewer probability of each emitted token.
    pub emitted_probs: Vec<f64>,
    /// Reviewer distribution at each emitted position.
    pub emitted_dists: Vec<Distribution>,
    pub rejected: bool,
    pub proposed: usize,
}

impl ReviewOutcome {
    /// Per-position accept bits over the proposed tokens.
    pub fn positional_accept(&self) -> Vec<bool> {
        (0..self.proposed).map(|i| i < self.accepted_count).collect()
    }
}

/// Reviews `draft` against `reviewer_dists` (one per draft position plus the
/// bonus position).
///
/// Sampling: accept `x` when `q(x) <= l * p(x)`, otherwise reject with
/// probability `1 - l * p(x) / q(x)` and resample from the residual.
/// Greedy with `l = 1`: accept only the reviewer's argmax. Greedy with `l > 1`:
/// accept on argmax match or `q(x) <= l * p(x)`. Greedy never draws randomness.
pub fn speculative_review(
    reviewer_dists: &[Distribution],
    draft: &DraftBatch,
    lenience: Lenience,
    mode: DecodeMode,
    rng: &mut RandomSource,
) -> Result<ReviewOutcome> {
    draft.validate()?;
    let k = draft.len();
    if reviewer_dists.len() != k + 1 {
        return Err(Error::contract(format!(
            "{} reviewer distributions for {k} draft tokens",
            reviewer_dists.len()
        )));
    }
    if mode == DecodeMode::Sampling && draft.proposal_dists.is_none() && k > 0 {
        return Err(Error::contract("sampling review needs proposal distributions"));
    }
    let l = lenience.value();

    let mut emitted = Vec::with_capacity(k + 1);
    for (i, (&token, &q)) in draft.tokens.iter().zip(&draft.proposal_probs).enumerate() {
        let target = &reviewer_dists[i];
        let p = target.prob(token);
        let accept = match mode {
            DecodeMode::Greedy => {
                token == target.argmax() || (!lenience.is_strict() && q <= l * p)
            }
            DecodeMode::Sampling => {
                if q <= l * p {
                    true
                } else {
                    let reject_prob = (1.0 - l * p / q).clamp(0.0, 1.0);
                    rng.uniform() >= reject_prob
                }
            }
        };
        if accept {
            emitted.push(token);
            continue;
        }
        let correction = match mode {
            DecodeMode::Greedy => target.argmax(),
            DecodeMode::Sampling => {
                let proposer = &draft.proposal_dists.as_ref().expect("checked above")[i];
                match Distribution::residual(target, proposer) {
                    Ok(residual) => residual.sample(rng),
                    Err(Error::DegenerateDistribution) => target.sample(rng),
                    Err(e) => return Err(e),
                }
            }
        };
        emitted.push(correction);
        return Ok(finish(reviewer_dists, emitted, i, true, k));
    }

    let bonus_dist = &reviewer_dists[k];
    let bonus = match mode {
        DecodeMode::Greedy => bonus_dist.argmax(),
        DecodeMode::Sampling => bonus_dist.sample(rng),
    };
    emitted.push(bonus);
    Ok(finish(reviewer_dists, emitted, k, false, k))
}

fn finish(
    reviewer_dists: &[Distribution],
    emitted: TokenSeq,
    accepted_count: usize,
    rejected: bool,
    proposed: usize,
) -> ReviewOutcome {
    let emitted_dists: Vec<Distribution> = reviewer_dists[..emitted.len()].to_vec();
    let emitted_probs = emitted
        .iter()
        .zip(&emitted_dists)
        .map(|(t, d)| d.prob(*t))
        .collect();
    ReviewOutcome {
        accepted_count,
        emitted,
        emitted_probs,
        emitted_dists,
        rejected,
        proposed,
    }
}

/// Probability that a token drawn from `draft` passes review by `target`:
/// `min(1, sum_x min(q(x), l * p(x)))`.
pub fn acceptance_probability(target: &Distribution, draft: &Distribution, lenience: Lenience) -> f64 {
    let l = lenience.value();
    let mass: f64 = target
        .probs()
        .iter()
        .zip(draft.probs())
        .map(|(p, q)| q.min(l * p))
        .sum();
    mass.min(1.0)
}

/// Picks the next token from `dist` according to `mode`.
pub fn choose(dist: &Distribution, mode: DecodeMode, rng: &mut RandomSource) -> TokenId {
    match mode {
        DecodeMode::Greedy => dist.argmax(),
        DecodeMode::Sampling => dist.sample(rng),
    }
}

/// Autoregressively proposes `k` tokens from `draft`, appending them to `seq`.
/// Makes exactly `k` calls to `draft`.
pub fn propose(
    draft: &dyn LanguageModel,
    seq: &mut Vec<TokenId>,
    k: usize,
    mode: DecodeMode,
    rng: &mut RandomSource,
) -> Result<DraftBatch> {
    let mut batch = DraftBatch::default();
    for _ in 0..k {
        let dist = next_distribution(draft, seq)?;
        let token = choose(&dist, mode, rng);
        seq.push(token);
        batch.push(token, dist);
    }
    Ok(batch)
}

/// One step of vanilla speculative decoding on a working buffer. `seq` holds
/// the prefix on entry and is restored to it before returning.
pub fn sd_step_in_place(
    target: &dyn LanguageModel,
    draft: &dyn LanguageModel,
    k: usize,
    lenience: Lenience,
    seq: &mut Vec<TokenId>,
    mode: DecodeMode,
    rng: &mut RandomSource,
) -> Result<ReviewOutcome> {
    if k == 0 {
        return Err(Error::contract("speculative step needs k >= 1"));
    }
    let prefix_len = seq.len();
    let batch = propose(draft, seq, k, mode, rng);
    let batch = match batch {
        Ok(b) => b,
        Err(e) => {
            seq.truncate(prefix_len);
            return Err(e);
        }
    };
    let dists = target.evaluate(seq, prefix_len + 1);
    seq.truncate(prefix_len);
    speculative_review(&dists?, &batch, lenience, mode, rng)
}

/// One step of vanilla speculative decoding: `k` draft calls, one target call.
pub fn sd_step(
    target: &dyn LanguageModel,
    draft: &dyn LanguageModel,
    k: usize,
    lenience: Lenience,
    prefix: &[TokenId],
    mode: DecodeMode,
    rng: &mut RandomSource,
) -> Result<ReviewOutcome> {
    let mut seq = Vec::with_capacity(prefix.len() + k + 1);
    seq.extend_from_slice(prefix);
    sd_step_in_place(target, draft, k, lenience, &mut seq, mode, rng)
}
