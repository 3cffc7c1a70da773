//! Executes the runs of a bench config and assembles the report.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use csd_core::analytics::{swi, CostModel};
use csd_core::rng::split_seed;
use csd_core::{
    autoregressive_generate, generate, sd_generate, Budget, CascadeConfig, DecodeMode, GenerationTrace, KMatrix,
    LanguageModel, RandomSource, TokenSeq, Vocab,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accept::{AcceptanceCounts, PositionRate};
use crate::config::{BenchConfig, Method, RunSpec};
use crate::corpus::{detokenize, ingest_corpus, prompts, Corpus};
use crate::error::{config, BenchError, BenchResult};
use crate::models::{build_models, ModelHandle};

pub const REPORT_VERSION: u32 = 1;
pub const PRESET_MS: &str = "ms";
pub const PRESET_PW: &str = "pw";

/// Bench results. Serialized reports depend only on the config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub report_version: u32,
    pub master_seed: u64,
    pub prompts: usize,
    /// Per-run cost of every model under each preset.
    pub cost_presets: BTreeMap<String, BTreeMap<String, f64>>,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub method: Method,
    pub target: String,
    pub drafts: Vec<String>,
    pub k_matrix: KMatrix,
    pub lenience: f64,
    pub mode: DecodeMode,
    pub max_new_tokens: usize,
    pub seed: u64,
    pub tokens_emitted: usize,
    pub outer_steps: usize,
    pub calls_per_model: BTreeMap<String, u64>,
    pub cost_units: f64,
    /// SWI under each preset that prices every model of the run.
    pub swi: BTreeMap<String, f64>,
    /// Unconditional acceptance by position over the target's reviews.
    pub positional_acceptance: Vec<PositionRate>,
    /// Whether greedy output matched target-only greedy on every prompt;
    /// absent for sampling runs.
    pub greedy_equivalent: Option<bool>,
    pub warnings: Vec<String>,
}

impl RunRecord {
    /// SWI from the record's own counts and a preset's prices.
    pub fn recompute_swi(&self, prices: &BTreeMap<String, f64>) -> csd_core::Result<f64> {
        swi(&self.as_trace(), &CostModel(prices.clone()))
    }

    fn as_trace(&self) -> GenerationTrace {
        GenerationTrace {
            target: self.target.clone(),
            calls_per_model: self.calls_per_model.clone(),
            tokens_emitted: self.tokens_emitted,
            ..Default::default()
        }
    }
}

/// Everything a bench needs before running: tokenized corpus, prompts and
/// models.
pub struct Workspace {
    pub corpus: Corpus,
    pub prompts: Vec<TokenSeq>,
    pub models: BTreeMap<String, ModelHandle>,
}

impl Workspace {
    pub fn prepare(cfg: &BenchConfig) -> BenchResult<Self> {
        let c = &cfg.corpus;
        let corpus = ingest_corpus(&c.train, Some(&c.eval), c.tokenizer)?;
        let prompts = prompts(&corpus.eval, &corpus.vocab, &c.prompt_delimiter, c.prompts);
        if prompts.len() < c.prompts {
            return Err(config(format!(
                "eval split yields {} prompts, config asks for {}",
                prompts.len(),
                c.prompts
            )));
        }
        let models = build_models(&cfg.models, &corpus)?;
        Ok(Workspace { corpus, prompts, models })
    }

    fn model(&self, name: &str, prompt_len: usize) -> Arc<dyn LanguageModel> {
        self.models[name].for_prompt(prompt_len)
    }
}

/// Outputs and merged accounting of one run over all prompts.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outputs: Vec<TokenSeq>,
    pub trace: GenerationTrace,
    pub acceptance: AcceptanceCounts,
    pub wall_seconds: f64,
}

fn budget(run: &RunSpec) -> Budget {
    Budget::new(run.max_new_tokens).with_stop_tokens([Vocab::EOS])
}

fn run_prompt(ws: &Workspace, run: &RunSpec, prompt: &[csd_core::TokenId], seed: u64) -> BenchResult<(TokenSeq, GenerationTrace)> {
    let target = ws.model(&run.target, prompt.len());
    let drafts: Vec<_> = run.drafts.iter().map(|d| ws.model(d, prompt.len())).collect();
    let mut rng = RandomSource::new(seed);
    Ok(match run.method {
        Method::Autoregressive => autoregressive_generate(target.as_ref(), prompt, &budget(run), run.mode, &mut rng)?,
        Method::Sd => {
            if run.mode == DecodeMode::Sampling && !run.lenience.is_strict() && !run.allow_inexact_sampling {
                return Err(config(format!(
                    "run {}: lenience at the target review changes the sampled distribution; set allow_inexact_sampling",
                    run.label
                )));
            }
            sd_generate(
                target.as_ref(),
                drafts[0].as_ref(),
                run.k.unwrap_or(1),
                run.lenience,
                prompt,
                &budget(run),
                run.mode,
                &mut rng,
            )?
        }
        Method::Csd => generate(
            &CascadeConfig {
                target,
                drafts,
                k_matrix: run.effective_k_matrix(),
                lenience: run.lenience,
                mode: run.mode,
                budget: budget(run),
                seed,
                allow_inexact_sampling: run.allow_inexact_sampling,
            },
            prompt,
        )?,
    })
}

fn merge(total: &mut GenerationTrace, part: GenerationTrace) {
    total.tokens_emitted += part.tokens_emitted;
    total.outer_steps += part.outer_steps;
    total.cost_units += part.cost_units;
    for (m, n) in part.calls_per_model {
        *total.calls_per_model.entry(m).or_insert(0) += n;
    }
    for (m, c) in part.cost_weights {
        total.cost_weights.entry(m).or_insert(c);
    }
    for w in part.warnings {
        if !total.warnings.contains(&w) {
            total.warnings.push(w);
        }
    }
}

/// Runs one spec over every prompt. Prompt `j` uses the seed
/// `split(split(master_seed, run.seed), j)`.
pub fn execute_run(ws: &Workspace, run: &RunSpec, master_seed: u64) -> BenchResult<RunOutcome> {
    let started = Instant::now();
    let run_seed = split_seed(master_seed, run.seed);
    let mut trace = GenerationTrace {
        target: run.target.clone(),
        ..Default::default()
    };
    let mut acceptance = AcceptanceCounts::default();
    let mut outputs = Vec::with_capacity(ws.prompts.len());
    for (j, prompt) in ws.prompts.iter().enumerate() {
        let (out, part) = run_prompt(ws, run, prompt, split_seed(run_seed, j as u64))?;
        for review in part.outer_reviews() {
            acceptance.record(&review.positional_accept);
        }
        merge(&mut trace, part);
        outputs.push(out);
    }
    Ok(RunOutcome {
        outputs,
        trace,
        acceptance,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn diff(reference: &[csd_core::TokenId], got: &[csd_core::TokenId], vocab: &Vocab) -> String {
    let at = reference.iter().zip(got).position(|(a, b)| a != b).unwrap_or(reference.len().min(got.len()));
    let lo = at.saturating_sub(20);
    format!(
        "first difference at token {at}\n  target greedy: ...{:?}\n  run output:    ...{:?}",
        detokenize(&reference[lo..], vocab),
        detokenize(&got[lo..], vocab)
    )
}

/// Per-preset prices. MS uses each model's cost weight; PW the configured
/// per-run seconds.
pub fn cost_presets(cfg: &BenchConfig, ws: &Workspace) -> BTreeMap<String, BTreeMap<String, f64>> {
    let ms = ws.models.values().map(|h| h.priced()).collect();
    let mut presets = BTreeMap::from([(PRESET_MS.to_string(), ms)]);
    if !cfg.per_run_seconds.is_empty() {
        presets.insert(PRESET_PW.to_string(), cfg.per_run_seconds.clone());
    }
    presets
}

fn run_models(run: &RunSpec) -> impl Iterator<Item = &String> {
    std::iter::once(&run.target).chain(&run.drafts)
}

/// A finished bench: the report plus per-run wall-clock seconds.
pub struct BenchOutput {
    pub report: RunReport,
    pub wall_seconds: Vec<f64>,
}

/// Executes every run concurrently, checks greedy runs against target-only
/// greedy decoding and assembles the report in config order.
pub fn run_bench(cfg: &BenchConfig, ws: &Workspace, master_seed: u64) -> BenchResult<BenchOutput> {
    let outcomes: Vec<RunOutcome> = cfg
        .runs
        .par_iter()
        .map(|run| execute_run(ws, run, master_seed))
        .collect::<BenchResult<_>>()?;

    // Target-only greedy references, one per (target, budget).
    let mut wanted: Vec<(String, usize)> = cfg
        .runs
        .iter()
        .filter(|r| r.mode == DecodeMode::Greedy)
        .map(|r| (r.target.clone(), r.max_new_tokens))
        .collect();
    wanted.sort();
    wanted.dedup();
    let references: BTreeMap<(String, usize), Vec<TokenSeq>> = wanted
        .into_par_iter()
        .map(|(target, max_new)| {
            let outputs = ws
                .prompts
                .iter()
                .map(|p| {
                    let model = ws.model(&target, p.len());
                    let budget = Budget::new(max_new).with_stop_tokens([Vocab::EOS]);
                    let mut rng = RandomSource::new(0);
                    autoregressive_generate(model.as_ref(), p, &budget, DecodeMode::Greedy, &mut rng).map(|r| r.0)
                })
                .collect::<csd_core::Result<Vec<_>>>()?;
            Ok(((target, max_new), outputs))
        })
        .collect::<BenchResult<_>>()?;

    let presets = cost_presets(cfg, ws);
    let mut runs = Vec::with_capacity(cfg.runs.len());
    for (run, outcome) in cfg.runs.iter().zip(&outcomes) {
        let greedy_equivalent = match run.mode {
            DecodeMode::Sampling => None,
            DecodeMode::Greedy => {
                let reference = &references[&(run.target.clone(), run.max_new_tokens)];
                for (j, (want, got)) in reference.iter().zip(&outcome.outputs).enumerate() {
                    if want != got {
                        return Err(BenchError::GreedyMismatch {
                            label: run.label.clone(),
                            prompt: j,
                            diff: diff(want, got, &ws.corpus.vocab),
                        });
                    }
                }
                Some(true)
            }
        };
        let mut swis = BTreeMap::new();
        for (preset, prices) in &presets {
            if run_models(run).all(|m| prices.contains_key(m)) {
                swis.insert(preset.clone(), swi(&outcome.trace, &CostModel(prices.clone()))?);
            }
        }
        runs.push(RunRecord {
            label: run.label.clone(),
            method: run.method,
            target: run.target.clone(),
            drafts: run.drafts.clone(),
            k_matrix: run.effective_k_matrix(),
            lenience: run.lenience.value(),
            mode: run.mode,
            max_new_tokens: run.max_new_tokens,
            seed: run.seed,
            tokens_emitted: outcome.trace.tokens_emitted,
            outer_steps: outcome.trace.outer_steps,
            calls_per_model: outcome.trace.calls_per_model.clone(),
            cost_units: outcome.trace.cost_units,
            swi: swis,
            positional_acceptance: outcome.acceptance.unconditional(),
            greedy_equivalent,
            warnings: outcome.trace.warnings.clone(),
        });
    }
    Ok(BenchOutput {
        report: RunReport {
            report_version: REPORT_VERSION,
            master_seed,
            prompts: ws.prompts.len(),
            cost_presets: presets,
            runs,
        },
        wall_seconds: outcomes.iter().map(|o| o.wall_seconds).collect(),
    })
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Columns: `label,method,target,drafts,mode,tokens_emitted,target_calls,
    /// cost_units,swi_ms,swi_pw,greedy_equivalent,wall_seconds`.
    pub fn write_csv<W: Write>(&self, wall_seconds: &[f64], out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "label",
            "method",
            "target",
            "drafts",
            "mode",
            "tokens_emitted",
            "target_calls",
            "cost_units",
            "swi_ms",
            "swi_pw",
            "greedy_equivalent",
            "wall_seconds",
        ])?;
        let opt = |v: Option<&f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, r) in self.runs.iter().enumerate() {
            w.write_record([
                r.label.clone(),
                format!("{:?}", r.method).to_lowercase(),
                r.target.clone(),
                r.drafts.join("+"),
                format!("{:?}", r.mode).to_lowercase(),
                r.tokens_emitted.to_string(),
                r.calls_per_model.get(&r.target).copied().unwrap_or(0).to_string(),
                r.cost_units.to_string(),
                opt(r.swi.get(PRESET_MS)),
                opt(r.swi.get(PRESET_PW)),
                r.greedy_equivalent.map(|g| g.to_string()).unwrap_or_default(),
                wall_seconds.get(i).map(|s| format!("{s:.3}")).unwrap_or_default(),
            ])?;
        }
        w.flush()
    }
}
