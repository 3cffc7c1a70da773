//! Walltime analysis: acceptance-length generating functions, expected
//! walltime improvement factors, a Bernoulli Monte Carlo simulator, live
//! synthetic model pairs, and standardized walltime improvement.

mod ewif;
mod pgf;
mod simulate;
mod swi;
mod synthetic;

pub use ewif::{
    horizontal_ewif, horizontal_ewif_grad, sd_ewif, vertical_ewif, vertical_expected_tokens,
    AcceptanceProfile,
};
pub use pgf::{gen_fn, gen_fn_coefficients, poly_eval, poly_pow, t_alpha_expectation};
pub use simulate::{
    compare_drafting_plans, simulate_ewif, DraftingPlan, EwifEstimate, PlanComparison, PlanStage,
    SimPolicy,
    DEFAULT_TRIALS,
};
pub use swi::{swi, CostModel};
pub use synthetic::{synthetic_pair, SyntheticPair};
