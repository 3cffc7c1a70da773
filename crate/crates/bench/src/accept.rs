//! Acceptance rate by draft position.

use std::io::Write;

use csd_core::{sd_step, DecodeMode, Error, LanguageModel, Lenience, RandomSource, Result, TokenSeq, Vocab};
use serde::{Deserialize, Serialize};

/// Contexts are restarted from their prompt after this many generated tokens.
const MAX_CONTINUATION: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRate {
    /// 1-based draft position.
    pub position: usize,
    pub accept_rate: f64,
    /// Denominator of `accept_rate`.
    pub n: u64,
}

/// Per-position acceptance counts over a series of speculative steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCounts {
    /// `proposed[i]`: steps that proposed a token at position `i + 1`.
    pub proposed: Vec<u64>,
    pub accepted: Vec<u64>,
}

impl AcceptanceCounts {
    pub fn record(&mut self, bits: &[bool]) {
        if self.proposed.len() < bits.len() {
            self.proposed.resize(bits.len(), 0);
            self.accepted.resize(bits.len(), 0);
        }
        for (i, &b) in bits.iter().enumerate() {
            self.proposed[i] += 1;
            self.accepted[i] += b as u64;
        }
    }

    /// Fraction of steps in which position `i` was accepted.
    pub fn unconditional(&self) -> Vec<PositionRate> {
        self.proposed
            .iter()
            .zip(&self.accepted)
            .enumerate()
            .map(|(i, (&n, &a))| PositionRate {
                position: i + 1,
                accept_rate: if n == 0 { 0.0 } else { a as f64 / n as f64 },
                n,
            })
            .collect()
    }

    /// Acceptance at position `i` among steps that accepted position `i - 1`.
    pub fn conditional(&self) -> Vec<PositionRate> {
        (0..self.proposed.len())
            .map(|i| {
                let n = if i == 0 { self.proposed[0] } else { self.accepted[i - 1] };
                PositionRate {
                    position: i + 1,
                    accept_rate: if n == 0 { 0.0 } else { self.accepted[i] as f64 / n as f64 },
                    n,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCurve {
    pub k: usize,
    pub steps: usize,
    pub counts: AcceptanceCounts,
}

impl AcceptanceCurve {
    pub fn rates(&self) -> Vec<f64> {
        self.counts.unconditional().iter().map(|r| r.accept_rate).collect()
    }

    /// Columns `position,accept_rate,n,cond_accept_rate,cond_n`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["position", "accept_rate", "n", "cond_accept_rate", "cond_n"])?;
        for (u, c) in self.counts.unconditional().iter().zip(self.counts.conditional()) {
            w.write_record([
                u.position.to_string(),
                u.accept_rate.to_string(),
                u.n.to_string(),
                c.accept_rate.to_string(),
                c.n.to_string(),
            ])?;
        }
        w.flush()
    }
}

/// Runs `steps` speculative steps with `k` drafted tokens each, cycling over
/// `prompts`. Each prompt's context grows with the emitted tokens until it
/// hits EOS or a length cap, then restarts.
pub fn measure_positional_acceptance(
    target: &dyn LanguageModel,
    draft: &dyn LanguageModel,
    k: usize,
    prompts: &[TokenSeq],
    steps: usize,
    mode: DecodeMode,
    rng: &mut RandomSource,
) -> Result<AcceptanceCurve> {
    if k == 0 || steps == 0 {
        return Err(Error::contract("positional acceptance needs k >= 1 and steps >= 1"));
    }
    if prompts.is_empty() || prompts.iter().any(|p| p.is_empty()) {
        return Err(Error::contract("positional acceptance needs non-empty prompts"));
    }
    let mut contexts: Vec<TokenSeq> = prompts.to_vec();
    let mut counts = AcceptanceCounts::default();
    for step in 0..steps {
        let slot = step % prompts.len();
        let out = sd_step(target, draft, k, Lenience::STRICT, &contexts[slot], mode, rng)?;
        counts.record(&out.positional_accept());
        let ctx = &mut contexts[slot];
        ctx.extend_from_slice(&out.emitted);
        if out.emitted.contains(&Vocab::EOS) || ctx.len() - prompts[slot].len() > MAX_CONTINUATION {
            ctx.clone_from(&prompts[slot]);
        }
    }
    Ok(AcceptanceCurve { k, steps, counts })
}
