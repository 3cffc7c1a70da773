use std::sync::Arc;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::model::{ContextFreeModel, LanguageModel};
use crate::vocab::TokenId;

/// Context-free target/draft pair with a known per-token acceptance rate.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub target: ContextFreeModel,
    pub draft: ContextFreeModel,
    pub alpha: f64,
}

impl SyntheticPair {
    pub fn with_draft_cost(mut self, cost: f64) -> Self {
        self.draft = ContextFreeModel::new(self.draft.descriptor(), self.draft.distribution().clone(), cost);
        self
    }

    pub fn into_arcs(self) -> (Arc<dyn LanguageModel>, Arc<dyn LanguageModel>) {
        (Arc::new(self.target), Arc::new(self.draft))
    }
}

/// Builds a draft from `base` by moving `1 - alpha` of mass from the most
/// probable token (lowest id on ties) to the lowest other id, so that
/// `sum_x min(p(x), q(x)) = alpha`. The target is `base` with cost 1; the
/// draft costs 0.
pub fn synthetic_pair(base: &Distribution, alpha: f64) -> Result<SyntheticPair> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Construction(format!("alpha {alpha} outside (0, 1]")));
    }
    if base.len() < 2 {
        return Err(Error::Construction("synthetic pair needs at least two tokens".into()));
    }
    let moved = 1.0 - alpha;
    let from = base.argmax();
    let to = TokenId(if from.0 == 0 { 1 } else { 0 });
    if base.prob(from) < moved {
        return Err(Error::Construction(format!(
            "alpha {alpha} needs {moved} mass on one token; the largest has {}",
            base.prob(from)
        )));
    }
    let mut q = base.probs().to_vec();
    q[from.index()] -= moved;
    q[to.index()] += moved;
    let draft = Distribution::normalize(&q)?;
    Ok(SyntheticPair {
        target: ContextFreeModel::new("synthetic-target", base.clone(), 1.0),
        draft: ContextFreeModel::new("synthetic-draft", draft, 0.0),
        alpha,
    })
}
