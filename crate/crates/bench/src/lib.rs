//! Experiment harness: corpus ingestion, model building, side-by-side runs,
//! SWI and positional-acceptance reporting, analytics grids, and the `csd`
//! command line.

pub mod accept;
pub mod analyze;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod models;
pub mod runner;

pub use accept::{measure_positional_acceptance, AcceptanceCounts, AcceptanceCurve, PositionRate};
pub use config::{BenchConfig, CorpusSpec, Method, ModelSource, ModelSpec, RunSpec};
pub use corpus::{detokenize, ingest_corpus, tokenize, Corpus};
pub use error::{BenchError, BenchResult};
pub use runner::{execute_run, run_bench, BenchOutput, RunRecord, RunReport, Workspace, REPORT_VERSION};
