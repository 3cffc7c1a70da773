use std::collections::BTreeMap;

use super::{normalize_counts, SparseRow};
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::model::{check_start, LanguageModel};
use crate::vocab::{TokenId, TokenSeq, Vocab};

/// Row-normalized token-to-token table. Rows never seen in training fall
/// back to uniform, so no row is all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramTable {
    pub(crate) name: String,
    pub(crate) vocab: Vocab,
    pub(crate) rows: BTreeMap<TokenId, SparseRow>,
}

pub fn train_bigram(corpus: &[TokenSeq], vocab: Vocab) -> Result<BigramTable> {
    if corpus.iter().all(|s| s.len() < 2) {
        return Err(Error::Training("bigram corpus has no token pairs".into()));
    }
    let mut counts: BTreeMap<TokenId, BTreeMap<TokenId, u64>> = BTreeMap::new();
    for seq in corpus {
        vocab.check(seq)?;
        for pair in seq.windows(2) {
            *counts.entry(pair[0]).or_default().entry(pair[1]).or_insert(0) += 1;
        }
    }
    Ok(BigramTable {
        name: "bigram".into(),
        vocab,
        rows: counts.into_iter().map(|(t, c)| (t, normalize_counts(c))).collect(),
    })
}

impl BigramTable {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Distribution of the token after `prev`.
    pub fn row(&self, prev: TokenId) -> Distribution {
        let v = self.vocab.size();
        match self.rows.get(&prev) {
            Some(row) => {
                let mut probs = vec![0.0; v];
                for &(t, p) in row {
                    probs[t.index()] = p;
                }
                Distribution::normalize(&probs).expect("trained rows carry mass")
            }
            None => Distribution::uniform(v),
        }
    }

    pub fn entries(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }

    fn next(&self, context: &[TokenId]) -> Distribution {
        match context.last() {
            Some(&prev) => self.row(prev),
            None => Distribution::uniform(self.vocab.size()),
        }
    }
}

impl LanguageModel for BigramTable {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }
    fn descriptor(&self) -> &str {
        &self.name
    }
    /// Number of non-zero table entries.
    fn cost_weight(&self) -> f64 {
        self.entries() as f64
    }
    fn evaluate(&self, tokens: &[TokenId], start: usize) -> Result<Vec<Distribution>> {
        check_start(tokens, start)?;
        Ok((start..=tokens.len() + 1)
            .map(|p| self.next(&tokens[..p - 1]))
            .collect())
    }
}
