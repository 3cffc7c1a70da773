use std::sync::Arc;

use csd_bench::measure_positional_acceptance;
use csd_core::analytics::synthetic_pair;
use csd_core::{ContextFreeModel, DecodeMode, Distribution, LanguageModel, RandomSource, TokenId};

fn cf(p: &[f64]) -> Arc<dyn LanguageModel> {
    Arc::new(ContextFreeModel::new("cf", Distribution::from_probs(p.to_vec()).unwrap(), 1.0))
}

fn prompt() -> Vec<Vec<TokenId>> {
    vec![vec![TokenId(0)]]
}

#[test]
fn self_agreement_accepts_everything() {
    let m = cf(&[0.2, 0.3, 0.5]);
    for mode in [DecodeMode::Sampling, DecodeMode::Greedy] {
        let curve =
            measure_positional_acceptance(m.as_ref(), m.as_ref(), 8, &prompt(), 500, mode, &mut RandomSource::new(1))
                .unwrap();
        assert!(curve.rates().iter().all(|&r| r == 1.0));
        assert_eq!(curve.rates().len(), 8);
    }
}

#[test]
fn disjoint_support_rejects_first_position() {
    let target = cf(&[0.5, 0.5, 0.0, 0.0]);
    let draft = cf(&[0.0, 0.0, 0.5, 0.5]);
    let curve = measure_positional_acceptance(
        target.as_ref(),
        draft.as_ref(),
        5,
        &prompt(),
        300,
        DecodeMode::Sampling,
        &mut RandomSource::new(2),
    )
    .unwrap();
    assert!(curve.rates().iter().all(|&r| r == 0.0));
}

#[test]
fn synthetic_pair_decays_geometrically() {
    let pair = synthetic_pair(&Distribution::uniform(4), 0.8).unwrap();
    let (target, draft) = pair.into_arcs();
    let steps = 20_000;
    let curve = measure_positional_acceptance(
        target.as_ref(),
        draft.as_ref(),
        10,
        &prompt(),
        steps,
        DecodeMode::Sampling,
        &mut RandomSource::new(3),
    )
    .unwrap();
    for (i, r) in curve.rates().iter().enumerate() {
        let p = 0.8f64.powi(i as i32 + 1);
        let ci = 1.96 * (p * (1.0 - p) / steps as f64).sqrt();
        assert!((r - p).abs() <= 3.0 * ci, "position {}: {r} vs {p}", i + 1);
    }
    for c in curve.counts.conditional() {
        assert!((c.accept_rate - 0.8).abs() < 0.05, "{c:?}");
    }
}

#[test]
fn csv_has_fixed_header_and_k_rows() {
    let m = cf(&[0.2, 0.8]);
    let curve =
        measure_positional_acceptance(m.as_ref(), m.as_ref(), 30, &prompt(), 10, DecodeMode::Sampling, &mut RandomSource::new(0))
            .unwrap();
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert!(lines[0].starts_with("position,accept_rate,n"));
    assert_eq!(lines.len(), 31);
    assert_eq!(lines[1], "1,1,10,1,10");
}

#[test]
fn rejects_bad_arguments() {
    let m = cf(&[0.5, 0.5]);
    let mut rng = RandomSource::new(0);
    assert!(measure_positional_acceptance(m.as_ref(), m.as_ref(), 0, &prompt(), 5, DecodeMode::Sampling, &mut rng).is_err());
    assert!(measure_positional_acceptance(m.as_ref(), m.as_ref(), 3, &prompt(), 0, DecodeMode::Sampling, &mut rng).is_err());
}
