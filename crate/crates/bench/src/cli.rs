//! The `csd` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use csd_core::statlm::{train_bigram, train_ngram, MagModel, MatchPolicy, Smoothing};
use csd_core::statlm::format::StatModel;
use csd_core::{
    autoregressive_generate, generate, sd_generate, Budget, CascadeConfig, DecodeMode, GenerationTrace, KMatrix,
    LanguageModel, Lenience, RandomSource, TokenizerKind, Vocab,
};

use crate::accept::measure_positional_acceptance;
use crate::analyze::{run_analysis, AnalysisSpec};
use crate::config::BenchConfig;
use crate::corpus::{detokenize, ingest_corpus, prompts, tokenize};
use crate::error::{config, BenchError, BenchResult};
use crate::runner::{run_bench, Workspace};

#[derive(Debug, Parser)]
#[command(name = "csd", about = "Cascade speculative drafting experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Sampling,
}

impl From<Mode> for DecodeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Greedy => DecodeMode::Greedy,
            Mode::Sampling => DecodeMode::Sampling,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Tokenizer {
    Byte,
    Word,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelType {
    Ngram,
    Bigram,
    Mag,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Policy {
    Prompt,
    PromptGeneration,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a statistical model from a text file (one sequence per line).
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "ngram")]
        r#type: ModelType,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, value_enum, default_value = "byte")]
        tokenizer: Tokenizer,
        #[arg(long)]
        name: Option<String>,
        /// Max-Gram tokens per call.
        #[arg(long, default_value_t = csd_core::statlm::DEFAULT_SPAN)]
        span: usize,
        #[arg(long, value_enum, default_value = "prompt-generation")]
        policy: Policy,
    },
    /// Generate from one prompt and print the text and a trace summary.
    Run {
        #[arg(long)]
        target: PathBuf,
        /// Draft model files, largest first.
        #[arg(long = "draft")]
        drafts: Vec<PathBuf>,
        /// Draft length for speculative decoding with one draft.
        #[arg(long, conflicts_with = "k_matrix")]
        k: Option<usize>,
        /// JSON k-matrix for a cascade, e.g. "[[2,10],[0,10]]".
        #[arg(long)]
        k_matrix: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        lenience: f64,
        #[arg(long, value_enum, default_value = "greedy")]
        mode: Mode,
        #[arg(long, default_value_t = 64)]
        max_new_tokens: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        prompt: String,
    },
    /// Execute every run of a bench config and write the report.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Report JSON path; defaults to the config's `report` or report.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary CSV path; defaults to the report path with a .csv extension.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate an analytics grid or drafting-plan table to CSV.
    Analyze {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure acceptance rate by draft position.
    AcceptCurve {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        draft: PathBuf,
        #[arg(long, default_value_t = 30)]
        k: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        /// Text file whose lines provide prompts; defaults to a lone BOS token.
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long, default_value = "")]
        delimiter: String,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, value_enum, default_value = "sampling")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_file(path: &Path, bytes: &[u8]) -> BenchResult<()> {
    std::fs::write(path, bytes).map_err(|source| {
        BenchError::Core(csd_core::Error::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

fn load_model(path: &Path) -> BenchResult<Arc<dyn LanguageModel>> {
    Ok(StatModel::load(path)?.into_model())
}

fn same_vocab(models: &[Arc<dyn LanguageModel>]) -> BenchResult<()> {
    let first = models[0].vocab().pieces();
    for m in &models[1..] {
        if m.vocab().pieces() != first {
            return Err(config(format!(
                "models {} and {} use different vocabularies",
                models[0].descriptor(),
                m.descriptor()
            )));
        }
    }
    Ok(())
}

fn summary(trace: &GenerationTrace) -> String {
    let mut s = format!(
        "tokens emitted: {}\nouter steps: {}\ncost units: {}\ncalls:",
        trace.tokens_emitted, trace.outer_steps, trace.cost_units
    );
    for (m, n) in &trace.calls_per_model {
        s.push_str(&format!(" {m}={n}"));
    }
    for w in &trace.warnings {
        s.push_str(&format!("\nwarning: {w}"));
    }
    s
}

fn execute(command: Command, stdout: &mut dyn Write) -> BenchResult<()> {
    let io = |e: std::io::Error| BenchError::Runtime(e.to_string());
    match command {
        Command::Train { corpus, out, r#type, order, tokenizer, name, span, policy } => {
            let kind = match tokenizer {
                Tokenizer::Byte => TokenizerKind::Byte,
                Tokenizer::Word => TokenizerKind::Word,
            };
            let data = ingest_corpus(&corpus, None, kind)?;
            let model: StatModel = match r#type {
                ModelType::Ngram => {
                    let m = train_ngram(&data.train, data.vocab, order, Smoothing::default_for(order))?;
                    match name {
                        Some(n) => m.with_name(n),
                        None => m,
                    }
                    .into()
                }
                ModelType::Bigram => {
                    let m = train_bigram(&data.train, data.vocab)?;
                    match name {
                        Some(n) => m.with_name(n),
                        None => m,
                    }
                    .into()
                }
                ModelType::Mag => {
                    let policy = match policy {
                        Policy::Prompt => MatchPolicy::PromptOnly,
                        Policy::PromptGeneration => MatchPolicy::PromptAndGeneration,
                    };
                    let m = MagModel::new(Arc::new(train_bigram(&data.train, data.vocab)?))
                        .with_span(span)?
                        .with_policy(policy);
                    match name {
                        Some(n) => m.with_name(n),
                        None => m,
                    }
                    .into()
                }
            };
            model.save(&out)?;
            writeln!(stdout, "wrote {} ({}) to {}", model.name(), model_kind(&model), out.display()).map_err(io)?;
        }
        Command::Run { target, drafts, k, k_matrix, lenience, mode, max_new_tokens, seed, prompt } => {
            let target = load_model(&target)?;
            let drafts = drafts.iter().map(|p| load_model(p)).collect::<BenchResult<Vec<_>>>()?;
            let mut all = vec![Arc::clone(&target)];
            all.extend(drafts.iter().cloned());
            same_vocab(&all)?;
            let vocab = target.vocab().clone();
            let prompt_ids = tokenize(&prompt, &vocab);
            if prompt_ids.is_empty() {
                return Err(config("prompt is empty"));
            }
            let lenience = Lenience::new(lenience)?;
            let mode = DecodeMode::from(mode);
            let budget = Budget::new(max_new_tokens).with_stop_tokens([Vocab::EOS]);
            let mut rng = RandomSource::new(seed);
            let (out, trace) = match (drafts.len(), k, k_matrix) {
                (0, None, None) => autoregressive_generate(target.as_ref(), &prompt_ids, &budget, mode, &mut rng)?,
                (1, Some(k), None) => sd_generate(
                    target.as_ref(),
                    drafts[0].as_ref(),
                    k,
                    lenience,
                    &prompt_ids,
                    &budget,
                    mode,
                    &mut rng,
                )?,
                (n, None, Some(km)) if n > 0 => {
                    let rows: Vec<Vec<usize>> =
                        serde_json::from_str(&km).map_err(|e| config(format!("--k-matrix: {e}")))?;
                    generate(
                        &CascadeConfig {
                            target,
                            drafts,
                            k_matrix: KMatrix::new(rows)?,
                            lenience,
                            mode,
                            budget,
                            seed,
                            allow_inexact_sampling: false,
                        },
                        &prompt_ids,
                    )?
                }
                _ => {
                    return Err(config(
                        "give no drafts, one draft with --k, or drafts with a matching --k-matrix",
                    ))
                }
            };
            writeln!(stdout, "{}", detokenize(&out, &vocab)).map_err(io)?;
            writeln!(stdout, "{}", summary(&trace)).map_err(io)?;
        }
        Command::Bench { config: path, seed, out, csv } => {
            let cfg = BenchConfig::load(&path)?;
            let ws = Workspace::prepare(&cfg)?;
            let result = run_bench(&cfg, &ws, seed)?;
            let out = out.or_else(|| cfg.report.clone()).unwrap_or_else(|| PathBuf::from("report.json"));
            let csv = csv.unwrap_or_else(|| out.with_extension("csv"));
            write_file(&out, result.report.to_json().as_bytes())?;
            let mut buf = Vec::new();
            result.report.write_csv(&result.wall_seconds, &mut buf).map_err(io)?;
            write_file(&csv, &buf)?;
            for r in &result.report.runs {
                let swi = r.swi.get(crate::runner::PRESET_MS).copied().unwrap_or(f64::NAN);
                writeln!(
                    stdout,
                    "{:<24} target calls {:>6}  tokens {:>6}  SWI(ms) {:.4}",
                    r.label,
                    r.calls_per_model.get(&r.target).copied().unwrap_or(0),
                    r.tokens_emitted,
                    swi
                )
                .map_err(io)?;
            }
            writeln!(stdout, "report: {}\ncsv: {}", out.display(), csv.display()).map_err(io)?;
        }
        Command::Analyze { spec, out } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| config(format!("{}: {e}", spec.display())))?;
            let spec: AnalysisSpec =
                serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", spec.display())))?;
            let table = run_analysis(&spec)?;
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    table.write_csv(&mut buf).map_err(io)?;
                    write_file(&path, &buf)?;
                }
                None => table.write_csv(&mut *stdout).map_err(io)?,
            }
        }
        Command::AcceptCurve { target, draft, k, steps, prompts: prompt_file, delimiter, count, mode, seed, out } => {
            let target = load_model(&target)?;
            let draft = load_model(&draft)?;
            same_vocab(&[Arc::clone(&target), Arc::clone(&draft)])?;
            let vocab = target.vocab();
            let prompt_ids = match prompt_file {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|source| {
                        BenchError::Core(csd_core::Error::Io {
                            path: path.display().to_string(),
                            source,
                        })
                    })?;
                    let lines: Vec<_> = text
                        .lines()
                        .filter(|l| !l.trim().is_empty())
                        .map(|l| tokenize(l, vocab))
                        .collect();
                    prompts(&lines, vocab, &delimiter, count)
                }
                None => vec![vec![Vocab::BOS]],
            };
            if prompt_ids.is_empty() {
                return Err(config("no prompts found"));
            }
            let mut rng = RandomSource::new(seed);
            let curve = measure_positional_acceptance(
                target.as_ref(),
                draft.as_ref(),
                k,
                &prompt_ids,
                steps,
                mode.into(),
                &mut rng,
            )?;
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    curve.write_csv(&mut buf).map_err(io)?;
                    write_file(&path, &buf)?;
                }
                None => curve.write_csv(&mut *stdout).map_err(io)?,
            }
        }
    }
    Ok(())
}

fn model_kind(m: &StatModel) -> &'static str {
    match m {
        StatModel::NGram(_) => "ngram",
        StatModel::Bigram(_) => "bigram",
        StatModel::Mag(_) => "mag",
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code: 0 success, 2 usage or config error, 1 runtime error.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
