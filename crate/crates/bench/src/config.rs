//! Bench configuration file.
//!
//! Relative paths resolve against the directory holding the config.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use csd_core::statlm::{MatchPolicy, Smoothing, DEFAULT_SPAN};
use csd_core::{DecodeMode, KMatrix, Lenience, TokenizerKind};
use serde::{Deserialize, Serialize};

use crate::error::{config, BenchResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub corpus: CorpusSpec,
    pub models: Vec<ModelSpec>,
    /// Measured seconds per forward run, keyed by model name; enables the
    /// per-run-time (PW) cost preset when every model of a run is listed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_run_seconds: BTreeMap<String, f64>,
    pub runs: Vec<RunSpec>,
    /// Default report path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub train: PathBuf,
    pub eval: PathBuf,
    #[serde(default)]
    pub tokenizer: TokenizerKind,
    /// Eval lines are cut after the first occurrence of this string to form
    /// prompts. Empty means "first token only".
    #[serde(default)]
    pub prompt_delimiter: String,
    pub prompts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: ModelSource,
    /// Overrides the model's own cost weight (the MS preset).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelSource {
    Ngram {
        order: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smoothing: Option<Smoothing>,
    },
    Bigram,
    Mag {
        #[serde(default = "default_span")]
        span: usize,
        #[serde(default)]
        policy: MatchPolicy,
    },
    /// A statlm model file.
    File { path: PathBuf },
    Remote {
        url: String,
        vocab_size: usize,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

fn default_span() -> usize {
    DEFAULT_SPAN
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl ModelSource {
    pub fn remote_timeout(&self) -> Option<Duration> {
        match self {
            ModelSource::Remote { timeout_ms, .. } => Some(Duration::from_millis(*timeout_ms)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Autoregressive,
    Sd,
    Csd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub label: String,
    pub method: Method,
    pub target: String,
    /// Largest first.
    #[serde(default)]
    pub drafts: Vec<String>,
    /// Draft length for `sd`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_matrix: Option<KMatrix>,
    #[serde(default)]
    pub lenience: Lenience,
    pub mode: DecodeMode,
    pub max_new_tokens: usize,
    pub seed: u64,
    #[serde(default)]
    pub allow_inexact_sampling: bool,
}

impl RunSpec {
    /// The k-matrix the cascade engine runs with.
    pub fn effective_k_matrix(&self) -> KMatrix {
        match (self.method, &self.k_matrix) {
            (Method::Autoregressive, _) => KMatrix::empty(),
            (Method::Sd, _) => KMatrix::single(self.k.unwrap_or(1)),
            (Method::Csd, Some(k)) => k.clone(),
            (Method::Csd, None) => KMatrix::empty(),
        }
    }
}

impl BenchConfig {
    pub fn load(path: &Path) -> BenchResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        let mut cfg: BenchConfig =
            serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.train);
        fix(&mut self.corpus.eval);
        for m in &mut self.models {
            if let ModelSource::File { path } = &mut m.source {
                fix(path);
            }
        }
        if let Some(r) = &mut self.report {
            fix(r);
        }
    }

    pub fn validate(&self) -> BenchResult<()> {
        let mut names = BTreeSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return Err(config(format!("model {} defined twice", m.name)));
            }
            if let Some(c) = m.cost_weight {
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(config(format!("model {}: cost_weight must be finite and >= 0", m.name)));
                }
            }
        }
        if self.corpus.prompts == 0 {
            return Err(config("corpus.prompts must be at least 1"));
        }
        let mut labels = BTreeSet::new();
        for run in &self.runs {
            if !labels.insert(run.label.as_str()) {
                return Err(config(format!("run label {} used twice", run.label)));
            }
            let here = |msg: String| config(format!("run {}: {msg}", run.label));
            for name in std::iter::once(&run.target).chain(&run.drafts) {
                if !names.contains(name.as_str()) {
                    return Err(here(format!("unknown model {name}")));
                }
            }
            match run.method {
                Method::Autoregressive => {
                    if !run.drafts.is_empty() {
                        return Err(here("autoregressive runs take no drafts".into()));
                    }
                }
                Method::Sd => {
                    if run.drafts.len() != 1 {
                        return Err(here("sd runs take exactly one draft".into()));
                    }
                    if run.k.unwrap_or(0) == 0 {
                        return Err(here("sd runs need k >= 1".into()));
                    }
                }
                Method::Csd => {
                    let k = run.k_matrix.as_ref().ok_or_else(|| here("csd runs need a k_matrix".into()))?;
                    if run.drafts.is_empty() || k.levels() != run.drafts.len() {
                        return Err(here(format!(
                            "k_matrix has {} rows for {} drafts",
                            k.levels(),
                            run.drafts.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
