#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use csd_core::model::check_start;
use csd_core::{Distribution, LanguageModel, Result, TokenId, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// First-order Markov model: the next-token distribution depends only on the
/// last token.
#[derive(Debug, Clone)]
pub struct TableModel {
    pub name: String,
    pub vocab: Vocab,
    pub rows: Vec<Distribution>,
    pub cost: f64,
}

impl TableModel {
    pub fn new(name: &str, rows: Vec<Vec<f64>>, cost: f64) -> Self {
        let rows: Vec<Distribution> = rows.into_iter().map(|r| Distribution::normalize(&r).unwrap()).collect();
        TableModel {
            name: name.into(),
            vocab: Vocab::anonymous(rows.len()),
            rows,
            cost,
        }
    }

    /// Rows with one dominant token per context, chosen by `shift`.
    pub fn peaked(name: &str, v: usize, peak: f64, shift: usize, cost: f64) -> Self {
        let rows = (0..v)
            .map(|prev| {
                let mut row = vec![(1.0 - peak) / (v - 1) as f64; v];
                row[(prev * 2 + shift) % v] = peak;
                row
            })
            .collect();
        TableModel::new(name, rows, cost)
    }

    pub fn random(name: &str, v: usize, seed: u64, cost: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..v)
            .map(|_| (0..v).map(|_| rng.gen::<f64>().powi(3) + 1e-3).collect())
            .collect();
        TableModel::new(name, rows, cost)
    }

    pub fn next(&self, context: &[TokenId]) -> &Distribution {
        &self.rows[context.last().map_or(0, |t| t.index())]
    }
}

impl LanguageModel for TableModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }
    fn descriptor(&self) -> &str {
        &self.name
    }
    fn cost_weight(&self) -> f64 {
        self.cost
    }
    fn evaluate(&self, tokens: &[TokenId], start: usize) -> Result<Vec<Distribution>> {
        check_start(tokens, start)?;
        Ok((start..=tokens.len() + 1).map(|p| self.next(&tokens[..p - 1]).clone()).collect())
    }
}

/// Counts evaluate calls of the wrapped model.
pub struct Counting<M> {
    pub inner: M,
    pub calls: AtomicUsize,
}

impl<M> Counting<M> {
    pub fn new(inner: M) -> Arc<Self> {
        Arc::new(Counting {
            inner,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<M: LanguageModel> LanguageModel for Counting<M> {
    fn vocab(&self) -> &Vocab {
        self.inner.vocab()
    }
    fn descriptor(&self) -> &str {
        self.inner.descriptor()
    }
    fn cost_weight(&self) -> f64 {
        self.inner.cost_weight()
    }
    fn evaluate(&self, tokens: &[TokenId], start: usize) -> Result<Vec<Distribution>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate(tokens, start)
    }
    fn proposal_span(&self) -> usize {
        self.inner.proposal_span()
    }
}
