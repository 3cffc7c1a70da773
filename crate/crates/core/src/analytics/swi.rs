use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cascade::GenerationTrace;
use crate::error::{Error, Result};
use crate::model::LanguageModel;

/// Per-run cost of each model, by descriptor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostModel(pub BTreeMap<String, f64>);

impl CostModel {
    /// Model-size preset: each run costs the model's parameter count, which
    /// for the statistical models here is their stored table size.
    pub fn model_size(models: &[&dyn LanguageModel]) -> Self {
        CostModel(
            models
                .iter()
                .map(|m| (m.descriptor().to_string(), m.cost_weight()))
                .collect(),
        )
    }

    /// Previous-work preset: user-supplied per-run times.
    pub fn per_run_times(times: BTreeMap<String, f64>) -> Self {
        CostModel(times)
    }

    pub fn price(&self, descriptor: &str) -> Result<f64> {
        self.0
            .get(descriptor)
            .copied()
            .ok_or_else(|| Error::contract(format!("no cost for model {descriptor}")))
    }
}

/// Standardized walltime improvement: cost of generating the trace's tokens
/// autoregressively with the target, over the trace's cost.
pub fn swi(trace: &GenerationTrace, cost_model: &CostModel) -> Result<f64> {
    let target = cost_model.price(&trace.target)?;
    let mut spent = 0.0;
    for (model, calls) in &trace.calls_per_model {
        spent += *calls as f64 * cost_model.price(model)?;
    }
    if spent <= 0.0 {
        return Err(Error::contract("trace has no priced cost"));
    }
    Ok(trace.tokens_emitted as f64 * target / spent)
}
