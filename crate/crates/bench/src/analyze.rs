//! Analytics grids and drafting-plan comparisons for the `analyze` command.

use std::io::Write;

use csd_core::analytics::{
    compare_drafting_plans, horizontal_ewif, sd_ewif, simulate_ewif, vertical_ewif, AcceptanceProfile, DraftingPlan,
    SimPolicy, DEFAULT_TRIALS,
};
use csd_core::{RandomSource, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default = "default_trials")]
    pub trials: u64,
    pub seed: u64,
}

fn default_trials() -> u64 {
    DEFAULT_TRIALS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledProfile {
    pub label: String,
    pub alphas: Vec<f64>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "snake_case")]
pub enum AnalysisSpec {
    /// Cartesian grid of plain speculative decoding.
    SdGrid {
        alpha: Vec<f64>,
        c: Vec<f64>,
        k: Vec<usize>,
        #[serde(default)]
        simulate: Option<SimSettings>,
    },
    /// Cartesian grid of two-level vertical cascades, with the one-draft
    /// baseline `sd_ewif(alpha, c1, n)` alongside.
    VerticalGrid {
        alpha: Vec<f64>,
        alpha_inner: Vec<f64>,
        k: Vec<usize>,
        n: Vec<usize>,
        c1: Vec<f64>,
        c2: Vec<f64>,
        #[serde(default)]
        simulate: Option<SimSettings>,
    },
    Horizontal {
        profiles: Vec<LabeledProfile>,
        #[serde(default)]
        simulate: Option<SimSettings>,
    },
    /// Drafting plans with externally measured rates and costs.
    Plans {
        plans: Vec<DraftingPlan>,
        #[serde(default = "default_trials")]
        trials: u64,
        seed: u64,
        /// Free text describing where the rates and costs come from.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }

    /// Column `name` of every row.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

fn sim_columns(
    policy: &SimPolicy,
    settings: Option<SimSettings>,
    index: u64,
    row: &mut Vec<String>,
) -> Result<()> {
    if let Some(s) = settings {
        let est = simulate_ewif(policy, s.trials, &RandomSource::new(s.seed).split(index))?;
        row.push(est.mean.to_string());
        row.push(est.ci95.to_string());
    }
    Ok(())
}

fn with_sim(header: &[&str], settings: Option<SimSettings>) -> Table {
    let mut h = header.to_vec();
    if settings.is_some() {
        h.extend(["simulated", "ci95"]);
    }
    Table::new(&h)
}

pub fn run_analysis(spec: &AnalysisSpec) -> Result<Table> {
    match spec {
        AnalysisSpec::SdGrid { alpha, c, k, simulate } => {
            let mut t = with_sim(&["alpha", "c", "k", "ewif"], *simulate);
            let mut index = 0;
            for &a in alpha {
                for &cc in c {
                    for &kk in k {
                        let policy = SimPolicy::Sd { alpha: a, c: cc, k: kk };
                        let mut row = vec![a.to_string(), cc.to_string(), kk.to_string(), sd_ewif(a, cc, kk).to_string()];
                        sim_columns(&policy, *simulate, index, &mut row)?;
                        index += 1;
                        t.rows.push(row);
                    }
                }
            }
            Ok(t)
        }
        AnalysisSpec::VerticalGrid { alpha, alpha_inner, k, n, c1, c2, simulate } => {
            let mut t = with_sim(
                &["alpha", "alpha_inner", "k", "n", "c1", "c2", "ewif", "sd_baseline"],
                *simulate,
            );
            let mut index = 0;
            for &a in alpha {
                for &ai in alpha_inner {
                    for &kk in k {
                        for &nn in n {
                            for &x1 in c1 {
                                for &x2 in c2 {
                                    let policy = SimPolicy::Vertical {
                                        alpha: a,
                                        alpha_inner: ai,
                                        k: kk,
                                        n: nn,
                                        c1: x1,
                                        c2: x2,
                                    };
                                    let mut row = vec![
                                        a.to_string(),
                                        ai.to_string(),
                                        kk.to_string(),
                                        nn.to_string(),
                                        x1.to_string(),
                                        x2.to_string(),
                                        vertical_ewif(a, ai, kk, nn, x1, x2).to_string(),
                                        sd_ewif(a, x1, nn).to_string(),
                                    ];
                                    sim_columns(&policy, *simulate, index, &mut row)?;
                                    index += 1;
                                    t.rows.push(row);
                                }
                            }
                        }
                    }
                }
            }
            Ok(t)
        }
        AnalysisSpec::Horizontal { profiles, simulate } => {
            let mut t = with_sim(&["label", "k", "ewif"], *simulate);
            for (i, p) in profiles.iter().enumerate() {
                let profile = AcceptanceProfile::new(p.alphas.clone(), p.costs.clone())?;
                let mut row = vec![p.label.clone(), profile.len().to_string(), horizontal_ewif(&profile).to_string()];
                sim_columns(&SimPolicy::Horizontal { profile }, *simulate, i as u64, &mut row)?;
                t.rows.push(row);
            }
            Ok(t)
        }
        AnalysisSpec::Plans { plans, trials, seed, .. } => {
            let mut t = Table::new(&["label", "stages", "closed_form", "simulated", "ci95", "relative_gap"]);
            for cmp in compare_drafting_plans(plans, *trials, *seed)? {
                let plan = plans.iter().find(|p| p.label == cmp.label).expect("plan labels round-trip");
                let stages = plan
                    .stages
                    .iter()
                    .map(|s| format!("{}:k={}", s.model, s.k))
                    .collect::<Vec<_>>()
                    .join("+");
                t.rows.push(vec![
                    cmp.label.clone(),
                    stages,
                    cmp.closed_form.to_string(),
                    cmp.simulated.mean.to_string(),
                    cmp.simulated.ci95.to_string(),
                    cmp.relative_gap().to_string(),
                ]);
            }
            Ok(t)
        }
    }
}
