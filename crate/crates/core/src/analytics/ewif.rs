use serde::{Deserialize, Serialize};

use super::pgf::{gen_fn, gen_fn_coefficients, poly_pow, t_alpha_expectation};
use crate::error::{Error, Result};

/// Per-stage acceptance rates and cost coefficients of a horizontal cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceProfile {
    pub alphas: Vec<f64>,
    pub costs: Vec<f64>,
}

impl AcceptanceProfile {
    pub fn new(alphas: Vec<f64>, costs: Vec<f64>) -> Result<Self> {
        let p = AcceptanceProfile { alphas, costs };
        p.validate()?;
        Ok(p)
    }

    /// `k` stages sharing one rate and cost.
    pub fn uniform(alpha: f64, cost: f64, k: usize) -> Result<Self> {
        AcceptanceProfile::new(vec![alpha; k], vec![cost; k])
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.len() != self.costs.len() {
            return Err(Error::contract(format!(
                "{} acceptance rates for {} costs",
                self.alphas.len(),
                self.costs.len()
            )));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::contract(format!("acceptance rate {a} outside [0, 1]")));
        }
        if let Some(c) = self.costs.iter().find(|c| !(**c >= 0.0)) {
            return Err(Error::contract(format!("negative cost coefficient {c}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// `1 + sum c_i`: cost of one step relative to a target run.
    pub fn step_cost(&self) -> f64 {
        1.0 + self.costs.iter().sum::<f64>()
    }
}

/// Expected walltime improvement of speculative decoding:
/// `(1 - alpha^(k+1)) / ((1 - alpha)(c k + 1))`, with the limit
/// `(k + 1) / (c k + 1)` at `alpha = 1`.
pub fn sd_ewif(alpha: f64, c: f64, k: usize) -> f64 {
    let cost = c * k as f64 + 1.0;
    if alpha >= 1.0 {
        return (k as f64 + 1.0) / cost;
    }
    (1.0 - alpha.powi(k as i32 + 1)) / ((1.0 - alpha) * cost)
}

/// Expected walltime improvement of a two-draft vertical cascade: the middle
/// draft reviews `n` speculative steps of `k` tokens each from the smallest
/// draft, then the target reviews everything:
/// `(1 - alpha phi^n(alpha)) / ((1 - alpha)(1 + n c1 + n k c2))` with
/// `phi = gen_fn(alpha_inner, k, .)`.
pub fn vertical_ewif(alpha: f64, alpha_inner: f64, k: usize, n: usize, c1: f64, c2: f64) -> f64 {
    let cost = 1.0 + n as f64 * c1 + (n * k) as f64 * c2;
    if alpha >= 1.0 {
        // Limit: 1 + n * phi'(1).
        let inner = t_alpha_expectation(&gen_fn_coefficients(alpha_inner, k), 1.0) - 1.0;
        return (1.0 + n as f64 * inner) / cost;
    }
    let phi_n = gen_fn(alpha_inner, k, alpha).powi(n as i32);
    (1.0 - alpha * phi_n) / ((1.0 - alpha) * cost)
}

/// Expected accepted-plus-one tokens of a vertical step, computed from the
/// coefficients of `phi^n` through the `T_alpha` operator.
pub fn vertical_expected_tokens(alpha: f64, alpha_inner: f64, k: usize, n: usize) -> f64 {
    t_alpha_expectation(&poly_pow(&gen_fn_coefficients(alpha_inner, k), n), alpha)
}

fn prefix_products(alphas: &[f64]) -> impl Iterator<Item = f64> + '_ {
    std::iter::once(1.0).chain(alphas.iter().scan(1.0, |acc, a| {
        *acc *= a;
        Some(*acc)
    }))
}

/// `(sum_{i=0..k} prod_{j<=i} alpha_j) / (1 + sum c_i)`.
pub fn horizontal_ewif(profile: &AcceptanceProfile) -> f64 {
    prefix_products(&profile.alphas).sum::<f64>() / profile.step_cost()
}

/// Partial derivative of [`horizontal_ewif`] with respect to `alpha_l`
/// (1-based): `(sum_{i=l..k} prod_{j<=i, j != l} alpha_j) / (1 + sum c_i)`.
pub fn horizontal_ewif_grad(profile: &AcceptanceProfile, l: usize) -> Result<f64> {
    let k = profile.len();
    if l == 0 || l > k {
        return Err(Error::contract(format!("stage index {l} outside 1..={k}")));
    }
    let mut total = 0.0;
    let mut product: f64 = profile.alphas[..l - 1].iter().product();
    for i in l..=k {
        if i > l {
            product *= profile.alphas[i - 1];
        }
        total += product;
    }
    Ok(total / profile.step_cost())
}
