use serde::{Deserialize, Serialize};

use super::ewif::{horizontal_ewif, sd_ewif, vertical_ewif, AcceptanceProfile};
use crate::error::{Error, Result};
use crate::rng::RandomSource;

pub const DEFAULT_TRIALS: u64 = 1_000_000;
const SHARDS: u64 = 8;
const Z95: f64 = 1.959_963_984_540_054;

/// Drafting scheme simulated under i.i.d. Bernoulli token acceptance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum SimPolicy {
    Sd {
        alpha: f64,
        c: f64,
        k: usize,
    },
    /// `n` inner steps of `k` tokens reviewed by the middle draft, then one
    /// target review. Every outer step is priced `1 + n c1 + n k c2`.
    Vertical {
        alpha: f64,
        alpha_inner: f64,
        k: usize,
        n: usize,
        c1: f64,
        c2: f64,
    },
    Horizontal {
        profile: AcceptanceProfile,
    },
}

impl SimPolicy {
    fn validate(&self) -> Result<()> {
        let rate = |a: f64| (0.0..=1.0).contains(&a);
        let ok = match self {
            SimPolicy::Sd { alpha, c, k } => rate(*alpha) && *c >= 0.0 && *k >= 1,
            SimPolicy::Vertical { alpha, alpha_inner, k, n, c1, c2 } => {
                rate(*alpha) && rate(*alpha_inner) && *k >= 1 && *n >= 1 && *c1 >= 0.0 && *c2 >= 0.0
            }
            SimPolicy::Horizontal { profile } => return profile.validate(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!("invalid simulation parameters {self:?}")))
        }
    }

    pub fn closed_form(&self) -> f64 {
        match self {
            SimPolicy::Sd { alpha, c, k } => sd_ewif(*alpha, *c, *k),
            SimPolicy::Vertical { alpha, alpha_inner, k, n, c1, c2 } => {
                vertical_ewif(*alpha, *alpha_inner, *k, *n, *c1, *c2)
            }
            SimPolicy::Horizontal { profile } => horizontal_ewif(profile),
        }
    }

    fn step_cost(&self) -> f64 {
        match self {
            SimPolicy::Sd { c, k, .. } => 1.0 + c * *k as f64,
            SimPolicy::Vertical { k, n, c1, c2, .. } => 1.0 + *n as f64 * c1 + (n * k) as f64 * c2,
            SimPolicy::Horizontal { profile } => profile.step_cost(),
        }
    }

    /// Tokens emitted by one outer review.
    fn emitted(&self, rng: &mut RandomSource) -> u64 {
        match self {
            SimPolicy::Sd { alpha, k, .. } => leading_accepts(*alpha, *k as u64, rng) + 1,
            SimPolicy::Vertical { alpha, alpha_inner, k, n, .. } => {
                let drafted: u64 = (0..*n).map(|_| leading_accepts(*alpha_inner, *k as u64, rng) + 1).sum();
                leading_accepts(*alpha, drafted, rng) + 1
            }
            SimPolicy::Horizontal { profile } => {
                profile.alphas.iter().take_while(|a| rng.bernoulli(**a)).count() as u64 + 1
            }
        }
    }
}

/// Running mean and sum of squared deviations (Welford), mergeable across
/// shards.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n / n,
            m2: self.m2 + other.m2 + delta * delta * self.n * other.n / n,
        }
    }
}

fn leading_accepts(alpha: f64, k: u64, rng: &mut RandomSource) -> u64 {
    let mut n = 0;
    while n < k && rng.bernoulli(alpha) {
        n += 1;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwifEstimate {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub trials: u64,
}

/// Monte Carlo estimate of the walltime improvement of `policy`.
///
/// Trials are split over a fixed number of shards, each drawing from
/// `rng.split(shard)`, and merged in shard order, so the result depends only
/// on the seed and the trial count.
pub fn simulate_ewif(policy: &SimPolicy, trials: u64, rng: &RandomSource) -> Result<EwifEstimate> {
    if trials == 0 {
        return Err(Error::contract("simulation needs at least one trial"));
    }
    policy.validate()?;
    let cost = policy.step_cost();
    let shards = SHARDS.min(trials);
    let partials: Vec<Moments> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..shards)
            .map(|s| {
                let count = trials / shards + u64::from(s < trials % shards);
                let mut stream = rng.split(s);
                scope.spawn(move || {
                    let mut m = Moments::default();
                    for _ in 0..count {
                        m.push(policy.emitted(&mut stream) as f64 / cost);
                    }
                    m
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation shard panicked")).collect()
    });
    let total = partials.into_iter().fold(Moments::default(), Moments::merge);
    let n = trials as f64;
    let mean = total.mean;
    let var = if trials > 1 { total.m2 / (n - 1.0) } else { 0.0 };
    Ok(EwifEstimate {
        mean,
        ci95: Z95 * (var / n).sqrt(),
        trials,
    })
}

/// One block of a drafting plan: `k` consecutive tokens drafted by a model
/// with acceptance `alpha` and cost coefficient `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStage {
    pub model: String,
    pub alpha: f64,
    pub c: f64,
    pub k: usize,
}

/// A named horizontal drafting plan; a single stage is plain speculative
/// decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftingPlan {
    pub label: String,
    pub stages: Vec<PlanStage>,
}

impl DraftingPlan {
    pub fn profile(&self) -> Result<AcceptanceProfile> {
        let mut alphas = Vec::new();
        let mut costs = Vec::new();
        for s in &self.stages {
            alphas.extend(std::iter::repeat(s.alpha).take(s.k));
            costs.extend(std::iter::repeat(s.c).take(s.k));
        }
        AcceptanceProfile::new(alphas, costs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanComparison {
    pub label: String,
    pub closed_form: f64,
    pub simulated: EwifEstimate,
}

impl PlanComparison {
    pub fn relative_gap(&self) -> f64 {
        (self.simulated.mean - self.closed_form).abs() / self.closed_form
    }
}

/// Simulates each plan with user-supplied rates and costs and pairs it with
/// the closed form.
pub fn compare_drafting_plans(plans: &[DraftingPlan], trials: u64, seed: u64) -> Result<Vec<PlanComparison>> {
    let root = RandomSource::new(seed);
    plans
        .iter()
        .enumerate()
        .map(|(i, plan)| {
            let policy = SimPolicy::Horizontal {
                profile: plan.profile()?,
            };
            Ok(PlanComparison {
                label: plan.label.clone(),
                closed_form: policy.closed_form(),
                simulated: simulate_ewif(&policy, trials, &root.split(i as u64))?,
            })
        })
        .collect()
}
