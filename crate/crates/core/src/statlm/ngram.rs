use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{normalize_counts, SparseRow};
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::model::{check_start, LanguageModel};
use crate::vocab::{TokenId, TokenSeq, Vocab};

/// Fixed interpolation weights. `orders[o - 1]` weighs the order-`o`
/// estimate; `uniform` weighs the uniform floor that keeps every token
/// reachable. Weights of orders whose context was never seen are dropped and
/// the rest renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub uniform: f64,
    pub orders: Vec<f64>,
}

impl Smoothing {
    /// Doubling weights per order over a small uniform floor.
    pub fn default_for(order: usize) -> Self {
        Smoothing {
            uniform: 1e-3,
            orders: (0..order).map(|o| f64::powi(2.0, o as i32)).collect(),
        }
    }

    fn validate(&self, order: usize) -> Result<()> {
        if self.orders.len() != order {
            return Err(Error::Training(format!(
                "{} interpolation weights for order {order}",
                self.orders.len()
            )));
        }
        if !(self.uniform > 0.0) || self.orders.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Training(
                "interpolation weights must be non-negative with a positive uniform floor".into(),
            ));
        }
        Ok(())
    }
}

/// Interpolated n-gram model over maximum-likelihood tables.
#[derive(Debug, Clone)]
pub struct NGramModel {
    pub(crate) name: String,
    pub(crate) order: usize,
    pub(crate) vocab: Vocab,
    /// `tables[o - 1]` maps an `(o - 1)`-token context to its ML row.
    pub(crate) tables: Vec<HashMap<TokenSeq, SparseRow>>,
    pub(crate) smoothing: Smoothing,
    pub(crate) cost_weight: f64,
}

/// Counts every n-gram up to `order` inside each sequence of `corpus`.
///
/// The cost weight defaults to the number of stored table entries.
pub fn train_ngram(
    corpus: &[TokenSeq],
    vocab: Vocab,
    order: usize,
    smoothing: Smoothing,
) -> Result<NGramModel> {
    if order == 0 {
        return Err(Error::Training("n-gram order must be at least 1".into()));
    }
    smoothing.validate(order)?;
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::Training("empty training corpus".into()));
    }
    for seq in corpus {
        vocab.check(seq)?;
    }

    let mut counts: Vec<HashMap<TokenSeq, BTreeMap<TokenId, u64>>> = vec![HashMap::new(); order];
    for seq in corpus {
        for t in 0..seq.len() {
            for ctx_len in 0..order.min(t + 1) {
                let ctx = seq[t - ctx_len..t].to_vec();
                *counts[ctx_len].entry(ctx).or_default().entry(seq[t]).or_insert(0) += 1;
            }
        }
    }
    let tables: Vec<HashMap<TokenSeq, SparseRow>> = counts
        .into_iter()
        .map(|m| m.into_iter().map(|(ctx, c)| (ctx, normalize_counts(c))).collect())
        .collect();
    let entries: usize = tables.iter().flat_map(|t| t.values()).map(Vec::len).sum();
    Ok(NGramModel {
        name: format!("ngram{order}"),
        order,
        vocab,
        tables,
        smoothing,
        cost_weight: entries as f64,
    })
}

impl NGramModel {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_cost_weight(mut self, cost: f64) -> Self {
        self.cost_weight = cost;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> &Smoothing {
        &self.smoothing
    }

    /// Total stored `(context, token)` entries across all orders.
    pub fn table_entries(&self) -> usize {
        self.tables.iter().flat_map(|t| t.values()).map(Vec::len).sum()
    }

    /// Maximum-likelihood row for a context, if it was seen in training.
    pub fn table_row(&self, context: &[TokenId]) -> Option<&SparseRow> {
        self.tables.get(context.len())?.get(context)
    }

    /// Interpolated next-token distribution given `context`.
    pub fn conditional(&self, context: &[TokenId]) -> Distribution {
        let v = self.vocab.size();
        let mut probs = vec![self.smoothing.uniform / v as f64; v];
        let mut total = self.smoothing.uniform;
        for ctx_len in 0..self.order.min(context.len() + 1) {
            let ctx = &context[context.len() - ctx_len..];
            if let Some(row) = self.tables[ctx_len].get(ctx) {
                let w = self.smoothing.orders[ctx_len];
                total += w;
                for &(t, p) in row {
                    probs[t.index()] += w * p;
                }
            }
        }
        debug_assert!(total > 0.0);
        Distribution::normalize(&probs).expect("uniform floor keeps mass positive")
    }
}

impl LanguageModel for NGramModel {
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
        Ok((start..=tokens.len() + 1)
            .map(|p| self.conditional(&tokens[..p - 1]))
            .collect())
    }
}

/// Per-token perplexity of `model` on `seq`.
pub fn perplexity(model: &dyn LanguageModel, seq: &[TokenId]) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::contract("perplexity of an empty sequence"));
    }
    let dists = model.evaluate(seq, 1)?;
    let nll: f64 = seq
        .iter()
        .zip(&dists)
        .map(|(t, d)| -d.prob(*t).ln())
        .sum();
    Ok((nll / seq.len() as f64).exp())
}
