//! Cascade speculative drafting over a pluggable language-model interface.

pub mod analytics;
pub mod cascade;
pub mod dist;
pub mod error;
pub mod kernel;
pub mod model;
pub mod rng;
pub mod statlm;
pub mod vocab;

pub use cascade::{
    autoregressive_generate, csd_step, generate, sd_generate, Budget, CascadeConfig, GenerationTrace, KMatrix,
    StageRecord,
};
pub use dist::Distribution;
pub use error::{Error, Result};
pub use kernel::{acceptance_probability, sd_step, speculative_review, DecodeMode, DraftBatch, Lenience, ReviewOutcome};
pub use model::{ContextFreeModel, LanguageModel};
pub use rng::RandomSource;
pub use vocab::{TokenId, TokenSeq, TokenizerKind, Vocab};
