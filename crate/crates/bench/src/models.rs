use std::collections::BTreeMap;
use std::sync::Arc;

use csd_core::statlm::{train_bigram, train_ngram, MagModel, MatchPolicy, Smoothing};
use csd_core::statlm::format::StatModel;
use csd_core::{Distribution, LanguageModel, Result, TokenId, Vocab};
use csd_remote::{RemoteModel, RemoteModelSpec};
use rayon::prelude::*;

use crate::config::{ModelSource, ModelSpec};
use crate::corpus::Corpus;
use crate::error::{config, BenchResult};

/// Gives a model the name and cost it has in the bench config.
#[derive(Debug)]
pub struct Renamed<M> {
    inner: M,
    name: String,
    cost_weight: f64,
}

impl<M: LanguageModel> Renamed<M> {
    pub fn new(inner: M, name: impl Into<String>, cost_weight: Option<f64>) -> Self {
        let cost_weight = cost_weight.unwrap_or_else(|| inner.cost_weight());
        Renamed {
            inner,
            name: name.into(),
            cost_weight,
        }
    }
}

impl<M: LanguageModel> LanguageModel for Renamed<M> {
    fn vocab(&self) -> &Vocab {
        self.inner.vocab()
    }
    fn descriptor(&self) -> &str {
        &self.name
    }
    fn cost_weight(&self) -> f64 {
        self.cost_weight
    }
    fn evaluate(&self, tokens: &[TokenId], start: usize) -> Result<Vec<Distribution>> {
        self.inner.evaluate(tokens, start)
    }
    fn proposal_span(&self) -> usize {
        self.inner.proposal_span()
    }
    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }
}

/// A configured model. Prompt-only Max-Gram needs each prompt's length, so it
/// stays unbound until a run asks for it.
#[derive(Clone)]
pub enum ModelHandle {
    Ready(Arc<dyn LanguageModel>),
    PromptBound { mag: MagModel, name: String, cost_weight: Option<f64> },
}

impl ModelHandle {
    pub fn for_prompt(&self, prompt_len: usize) -> Arc<dyn LanguageModel> {
        match self {
            ModelHandle::Ready(m) => Arc::clone(m),
            ModelHandle::PromptBound { mag, name, cost_weight } => {
                Arc::new(Renamed::new(mag.bind_prompt(prompt_len), name.clone(), *cost_weight))
            }
        }
    }

    /// Name and MS cost without binding a prompt.
    pub fn priced(&self) -> (String, f64) {
        let m = self.for_prompt(1);
        (m.descriptor().to_string(), m.cost_weight())
    }
}

fn ready<M: LanguageModel + 'static>(m: M, spec: &ModelSpec) -> ModelHandle {
    ModelHandle::Ready(Arc::new(Renamed::new(m, spec.name.clone(), spec.cost_weight)))
}

fn build(spec: &ModelSpec, corpus: &Corpus) -> BenchResult<ModelHandle> {
    Ok(match &spec.source {
        ModelSource::Ngram { order, smoothing } => {
            let smoothing = smoothing.clone().unwrap_or_else(|| Smoothing::default_for(*order));
            ready(train_ngram(&corpus.train, corpus.vocab.clone(), *order, smoothing)?, spec)
        }
        ModelSource::Bigram => ready(train_bigram(&corpus.train, corpus.vocab.clone())?, spec),
        ModelSource::Mag { span, policy } => {
            let fallback = Arc::new(train_bigram(&corpus.train, corpus.vocab.clone())?);
            let mag = MagModel::new(fallback).with_span(*span)?.with_policy(*policy);
            match policy {
                MatchPolicy::PromptAndGeneration => ready(mag, spec),
                MatchPolicy::PromptOnly => ModelHandle::PromptBound {
                    mag,
                    name: spec.name.clone(),
                    cost_weight: spec.cost_weight,
                },
            }
        }
        ModelSource::File { path } => {
            let model = StatModel::load(path)?;
            let handle = match model {
                StatModel::Mag(mag) if mag.policy() == MatchPolicy::PromptOnly => ModelHandle::PromptBound {
                    mag,
                    name: spec.name.clone(),
                    cost_weight: spec.cost_weight,
                },
                other => ready(other.into_model(), spec),
            };
            let vocab = handle.for_prompt(1).vocab().pieces().to_vec();
            if vocab != corpus.vocab.pieces() {
                return Err(config(format!(
                    "model {} ({}) was trained with a different vocabulary than the corpus",
                    spec.name,
                    path.display()
                )));
            }
            handle
        }
        ModelSource::Remote { url, vocab_size, retries, .. } => {
            let cost = spec
                .cost_weight
                .ok_or_else(|| config(format!("remote model {} needs a cost_weight", spec.name)))?;
            if *vocab_size != corpus.vocab.size() {
                return Err(config(format!(
                    "remote model {} declares vocab size {vocab_size}, corpus has {}",
                    spec.name,
                    corpus.vocab.size()
                )));
            }
            let remote = RemoteModelSpec::new(url.clone(), *vocab_size, cost)
                .with_timeout(spec.source.remote_timeout().unwrap_or_default())
                .with_retries(*retries)
                .with_name(spec.name.clone());
            ModelHandle::Ready(Arc::new(RemoteModel::connect(remote)?))
        }
    })
}

/// Builds every configured model, training in parallel.
pub fn build_models(specs: &[ModelSpec], corpus: &Corpus) -> BenchResult<BTreeMap<String, ModelHandle>> {
    specs
        .par_iter()
        .map(|spec| build(spec, corpus).map(|h| (spec.name.clone(), h)))
        .collect()
}
