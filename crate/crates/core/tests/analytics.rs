use csd_core::analytics::{
    gen_fn, gen_fn_coefficients, horizontal_ewif, horizontal_ewif_grad, sd_ewif, simulate_ewif, synthetic_pair,
    vertical_ewif, vertical_expected_tokens, AcceptanceProfile, SimPolicy,
};
use csd_core::{sd_step, DecodeMode, Distribution, Lenience, RandomSource, TokenId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Distribution of emitted tokens in one step, by walking every accept/reject
/// pattern of the `k` drafts.
fn enumerate_step(alpha: f64, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k + 2];
    for mask in 0u32..(1 << k) {
        let p: f64 = (0..k).map(|i| if mask >> i & 1 == 1 { alpha } else { 1.0 - alpha }).product();
        let accepted = (0..k).take_while(|i| mask >> i & 1 == 1).count();
        out[accepted + 1] += p;
    }
    out
}

/// Exact expected tokens of a vertical step: the middle model runs `n` inner
/// steps, then the target accepts a geometric prefix of the pooled draft.
fn vertical_oracle(alpha: f64, alpha_inner: f64, k: usize, n: usize) -> f64 {
    let step = enumerate_step(alpha_inner, k);
    let mut drafted = vec![1.0];
    for _ in 0..n {
        let mut next = vec![0.0; drafted.len() + k + 1];
        for (d, p) in drafted.iter().enumerate() {
            for (e, q) in step.iter().enumerate() {
                next[d + e] += p * q;
            }
        }
        drafted = next;
    }
    drafted
        .iter()
        .enumerate()
        .map(|(d, p)| p * (0..=d).map(|i| alpha.powi(i as i32)).sum::<f64>())
        .sum()
}

#[test]
fn generating_function_matches_enumeration() {
    for k in 1..=4 {
        for alpha in [0.0, 0.1, 0.5, 0.77, 1.0] {
            let exact = enumerate_step(alpha, k);
            let coeffs = gen_fn_coefficients(alpha, k);
            for (a, b) in exact.iter().zip(&coeffs) {
                assert!((a - b).abs() < 1e-12);
            }
            for x in [0.0f64, 0.3, 0.9, 1.0, 1.5] {
                let direct: f64 = exact.iter().enumerate().map(|(i, p)| p * x.powi(i as i32)).sum();
                assert!((gen_fn(alpha, k, x) - direct).abs() < 1e-12, "a={alpha} k={k} x={x}");
            }
        }
    }
}

proptest! {
    #[test]
    fn phi_below_identity(alpha in 0.01f64..0.99, inner in 0.0f64..1.0, k in 1usize..12) {
        prop_assert!((gen_fn(inner, k, 1.0) - 1.0).abs() < 1e-12);
        prop_assert!(gen_fn(inner, k, 0.0).abs() < 1e-12);
        prop_assert!(gen_fn(inner, k, alpha) < alpha);
    }

    #[test]
    fn vertical_closed_form_matches_oracle(
        alpha in 0.0f64..0.99, inner in 0.0f64..1.0, k in 1usize..6, n in 1usize..5,
    ) {
        let exact = vertical_oracle(alpha, inner, k, n);
        prop_assert!((vertical_expected_tokens(alpha, inner, k, n) - exact).abs() < 1e-9);
        let cost = 1.0 + n as f64 * 0.1 + (n * k) as f64 * 0.01;
        prop_assert!((vertical_ewif(alpha, inner, k, n, 0.1, 0.01) - exact / cost).abs() < 1e-9);
    }

    #[test]
    fn sd_is_a_one_stage_horizontal_profile(alpha in 0.0f64..1.0, c in 0.0f64..1.0, k in 1usize..20) {
        let h = horizontal_ewif(&AcceptanceProfile::uniform(alpha, c, k).unwrap());
        prop_assert!((h - sd_ewif(alpha, c, k)).abs() < 1e-9);
    }
}

#[test]
fn vertical_beats_sd_when_inner_draft_is_free() {
    let mut violations = 0;
    for alpha in [0.3, 0.5, 0.7, 0.8, 0.9] {
        for inner in [0.3, 0.5, 0.7, 0.9] {
            for k in 1..=6 {
                for n in 1..=6 {
                    for c1 in [0.01, 0.05, 0.1, 0.3] {
                        if vertical_ewif(alpha, inner, k, n, c1, 0.0) <= sd_ewif(alpha, c1, n) {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn simulation_agrees_with_closed_forms() {
    let policies = [
        SimPolicy::Sd { alpha: 0.8, c: 0.05, k: 5 },
        SimPolicy::Vertical { alpha: 0.8, alpha_inner: 0.7, k: 4, n: 3, c1: 0.05, c2: 0.001 },
        SimPolicy::Vertical { alpha: 0.5, alpha_inner: 0.9, k: 2, n: 5, c1: 0.2, c2: 0.0 },
        SimPolicy::Horizontal {
            profile: AcceptanceProfile::new(vec![0.9, 0.8, 0.6, 0.6, 0.3], vec![0.1, 0.1, 0.01, 0.01, 0.0]).unwrap(),
        },
    ];
    for (i, policy) in policies.iter().enumerate() {
        let est = simulate_ewif(policy, 200_000, &RandomSource::new(i as u64)).unwrap();
        let exact = policy.closed_form();
        assert!((est.mean - exact).abs() <= 3.0 * est.ci95, "{policy:?}: {} vs {exact} ± {}", est.mean, est.ci95);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    for _ in 0..1000 {
        let k = rng.gen_range(1..=8);
        let alphas: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..0.95)).collect();
        let costs: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..0.2)).collect();
        let profile = AcceptanceProfile::new(alphas.clone(), costs.clone()).unwrap();
        for l in 1..=k {
            let shifted = |d: f64| {
                let mut a = alphas.clone();
                a[l - 1] += d;
                horizontal_ewif(&AcceptanceProfile::new(a, costs.clone()).unwrap())
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let g = horizontal_ewif_grad(&profile, l).unwrap();
            assert!((g - fd).abs() < 1e-6, "l={l}: {g} vs {fd}");
        }
    }
    assert!(horizontal_ewif_grad(&AcceptanceProfile::uniform(0.5, 0.1, 3).unwrap(), 0).is_err());
    assert!(horizontal_ewif_grad(&AcceptanceProfile::uniform(0.5, 0.1, 3).unwrap(), 4).is_err());
}

#[test]
fn live_speculative_decoding_matches_expected_tokens() {
    let base = Distribution::from_probs(vec![0.7, 0.1, 0.1, 0.1]).unwrap();
    for (alpha, k) in [(0.6, 3usize), (0.8, 5)] {
        let (target, draft) = synthetic_pair(&base, alpha).unwrap().into_arcs();
        let steps = 40_000;
        let mut rng = RandomSource::new(1);
        let prefix = [TokenId(0)];
        let samples: Vec<f64> = (0..steps)
            .map(|_| {
                sd_step(target.as_ref(), draft.as_ref(), k, Lenience::STRICT, &prefix, DecodeMode::Sampling, &mut rng)
                    .unwrap()
                    .emitted
                    .len() as f64
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / steps as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (steps - 1) as f64;
        let ci = 3.0 * (var / steps as f64).sqrt();
        let exact = sd_ewif(alpha, 0.0, k);
        assert!((mean - exact).abs() <= ci, "alpha={alpha} k={k}: {mean} vs {exact} ± {ci}");
    }
}
