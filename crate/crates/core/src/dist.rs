use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::vocab::TokenId;

/// Tolerance on the total mass of a normalized distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Dense probability vector over a fixed vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Wraps an already-normalized vector, checking the invariant.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::contract("empty distribution"));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::contract(format!(
                "probability at {i} is {}",
                probs[i]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::contract(format!("distribution sums to {total}")));
        }
        Ok(Distribution { probs })
    }

    /// Scales non-negative weights to sum to one.
    pub fn normalize(weights: &[f64]) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::contract(format!("weight at {i} is {}", weights[i])));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateDistribution);
        }
        Ok(Distribution {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn point_mass(size: usize, token: TokenId) -> Self {
        let mut probs = vec![0.0; size];
        probs[token.index()] = 1.0;
        Distribution { probs }
    }

    pub fn uniform(size: usize) -> Self {
        Distribution {
            probs: vec![1.0 / size as f64; size],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs.get(token.index()).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Most probable token; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        TokenId(best as u32)
    }

    /// `normalize(max(0, target - draft))`. Fails with
    /// [`Error::DegenerateDistribution`] when the draft dominates everywhere.
    pub fn residual(target: &Distribution, draft: &Distribution) -> Result<Distribution> {
        if target.len() != draft.len() {
            return Err(Error::contract(format!(
                "residual over vocabularies of size {} and {}",
                target.len(),
                draft.len()
            )));
        }
        let diff: Vec<f64> = target
            .probs
            .iter()
            .zip(&draft.probs)
            .map(|(p, q)| (p - q).max(0.0))
            .collect();
        Distribution::normalize(&diff)
    }

    /// Inverse-CDF lookup over ascending token ids.
    pub fn sample_at(&self, u: f64) -> TokenId {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = i;
            if u < acc {
                return TokenId(i as u32);
            }
        }
        // Rounding left a sliver of mass above the final cumulative sum.
        TokenId(last as u32)
    }

    pub fn sample(&self, rng: &mut RandomSource) -> TokenId {
        self.sample_at(rng.uniform())
    }

    pub fn total_variation(&self, other: &Distribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
    }
}
