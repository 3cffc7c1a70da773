//! Statistical language models: interpolated n-grams, the bigram table,
//! and the Max-Gram copy drafter.

mod bigram;
pub mod format;
mod mag;
mod ngram;

pub use bigram::{train_bigram, BigramTable};
pub use mag::{longest_suffix_match, mag_propose, MagModel, MatchPolicy, DEFAULT_SPAN};
pub use ngram::{perplexity, train_ngram, NGramModel, Smoothing};

use crate::vocab::TokenId;

/// Sparse conditional row, sorted by token id and normalized.
pub type SparseRow = Vec<(TokenId, f64)>;

pub(crate) fn normalize_counts(counts: std::collections::BTreeMap<TokenId, u64>) -> SparseRow {
    let total: u64 = counts.values().sum();
    counts
        .into_iter()
        .map(|(t, c)| (t, c as f64 / total as f64))
        .collect()
}
