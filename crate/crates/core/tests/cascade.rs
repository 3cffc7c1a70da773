mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::{Counting, TableModel};
use csd_core::statlm::{train_bigram, train_ngram, MagModel, Smoothing};
use csd_core::{
    autoregressive_generate, generate, sd_generate, sd_step, Budget, CascadeConfig, DecodeMode, Distribution,
    GenerationTrace, KMatrix, LanguageModel, Lenience, RandomSource, TokenId, TokenSeq, Vocab,
};
use proptest::prelude::*;

fn arc<M: LanguageModel + 'static>(m: M) -> Arc<dyn LanguageModel> {
    Arc::new(m)
}

fn config(
    target: &Arc<dyn LanguageModel>,
    drafts: &[Arc<dyn LanguageModel>],
    k: Vec<Vec<usize>>,
    l: f64,
    mode: DecodeMode,
    max_new: usize,
    seed: u64,
) -> CascadeConfig {
    CascadeConfig {
        target: Arc::clone(target),
        drafts: drafts.to_vec(),
        k_matrix: KMatrix::new(k).unwrap(),
        lenience: Lenience::new(l).unwrap(),
        mode,
        budget: Budget::new(max_new),
        seed,
        allow_inexact_sampling: l > 1.0,
    }
}

fn toy_family() -> (Arc<dyn LanguageModel>, Vec<Arc<dyn LanguageModel>>) {
    let target = arc(TableModel::random("t", 7, 1, 1.0));
    let drafts = vec![
        arc(TableModel::random("d1", 7, 2, 0.3)),
        arc(TableModel::random("d2", 7, 3, 0.05)),
        arc(TableModel::random("d3", 7, 4, 0.0)),
    ];
    (target, drafts)
}

fn k_matrix_strategy(levels: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0usize..5, levels), levels).prop_map(move |mut rows| {
        for (i, row) in rows.iter_mut().enumerate() {
            // Every level needs at least one stage to draft from.
            if row[i..].iter().all(|&k| k == 0) {
                row[i] = 1;
            }
        }
        rows
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_cascade_equals_target_greedy(
        levels in 1usize..=3,
        rows in k_matrix_strategy(3),
        l in prop::sample::select(vec![1.0, 2.0, 5.0]),
        first in 3u32..7,
    ) {
        let (target, drafts) = toy_family();
        let drafts = &drafts[..levels];
        let k: Vec<Vec<usize>> = rows[..levels].iter().map(|r| r[..levels].to_vec()).collect();
        let prompt = vec![TokenId(first)];
        let (want, _) = autoregressive_generate(
            target.as_ref(), &prompt, &Budget::new(40), DecodeMode::Greedy, &mut RandomSource::new(0),
        ).unwrap();
        let (got, trace) = generate(&config(&target, drafts, k, l, DecodeMode::Greedy, 40, 9), &prompt).unwrap();
        prop_assert_eq!(got, want);
        prop_assert_eq!(trace.tokens_emitted, 40);
    }

    #[test]
    fn cost_units_match_call_counts(rows in k_matrix_strategy(2), seed in 0u64..1000) {
        let (target, drafts) = toy_family();
        let (_, trace) = generate(
            &config(&target, &drafts[..2], rows, 1.0, DecodeMode::Sampling, 30, seed),
            &[TokenId(3)],
        ).unwrap();
        let recomputed: f64 = trace
            .calls_per_model
            .iter()
            .map(|(m, n)| *n as f64 * trace.cost_weights[m])
            .sum();
        prop_assert!((recomputed - trace.cost_units).abs() < 1e-9);
        // One target call per outer step, one outer review per outer step.
        prop_assert_eq!(trace.target_calls() as usize, trace.outer_steps);
        prop_assert_eq!(trace.outer_reviews().count(), trace.outer_steps);
    }
}

#[test]
fn one_draft_cascade_is_speculative_decoding() {
    let (target, drafts) = toy_family();
    for mode in [DecodeMode::Sampling, DecodeMode::Greedy] {
        for k in [1, 3, 6] {
            for seed in 0..5 {
                let prompt = vec![TokenId(4)];
                let (a, ta) = generate(&config(&target, &drafts[..1], vec![vec![k]], 1.0, mode, 50, seed), &prompt).unwrap();
                let (b, tb) = sd_generate(
                    target.as_ref(),
                    drafts[0].as_ref(),
                    k,
                    Lenience::STRICT,
                    &prompt,
                    &Budget::new(50),
                    mode,
                    &mut RandomSource::new(seed),
                )
                .unwrap();
                assert_eq!(a, b, "{mode:?} k={k} seed={seed}");
                assert_eq!(ta, tb, "{mode:?} k={k} seed={seed}");
            }
        }
    }
}

#[test]
fn zero_draft_cascade_is_autoregressive() {
    let (target, _) = toy_family();
    for mode in [DecodeMode::Sampling, DecodeMode::Greedy] {
        for seed in 0..5 {
            let prompt = vec![TokenId(5)];
            let (a, ta) = generate(&config(&target, &[], vec![], 1.0, mode, 30, seed), &prompt).unwrap();
            let (b, tb) =
                autoregressive_generate(target.as_ref(), &prompt, &Budget::new(30), mode, &mut RandomSource::new(seed))
                    .unwrap();
            assert_eq!(a, b);
            assert_eq!(ta.calls_per_model, tb.calls_per_model);
            assert_eq!(ta.tokens_emitted, tb.tokens_emitted);
        }
    }
}

#[test]
fn sd_step_makes_k_draft_calls_and_one_target_call() {
    let target = Counting::new(TableModel::random("t", 6, 7, 1.0));
    let draft = Counting::new(TableModel::random("d", 6, 8, 0.1));
    let mut rng = RandomSource::new(3);
    for (i, k) in [1usize, 2, 5, 9].into_iter().enumerate() {
        let out = sd_step(target.as_ref(), draft.as_ref(), k, Lenience::STRICT, &[TokenId(3)], DecodeMode::Sampling, &mut rng)
            .unwrap();
        assert_eq!(out.proposed, k);
        assert!(out.emitted.len() >= 1 && out.emitted.len() <= k + 1);
        assert_eq!(target.calls(), i + 1);
        assert_eq!(draft.calls(), [1, 3, 8, 17][i]);
    }
}

#[test]
fn cascade_calls_match_instrumented_counts() {
    let t = Counting::new(TableModel::random("t", 6, 1, 1.0));
    let d1 = Counting::new(TableModel::random("d1", 6, 2, 0.2));
    let d2 = Counting::new(TableModel::random("d2", 6, 3, 0.0));
    let target: Arc<dyn LanguageModel> = t.clone();
    let drafts: Vec<Arc<dyn LanguageModel>> = vec![d1.clone(), d2.clone()];
    let (_, trace) = generate(
        &config(&target, &drafts, vec![vec![3, 4], vec![0, 2]], 1.0, DecodeMode::Sampling, 60, 2),
        &[TokenId(3)],
    )
    .unwrap();
    assert_eq!(trace.calls("t") as usize, t.calls());
    assert_eq!(trace.calls("d1") as usize, d1.calls());
    assert_eq!(trace.calls("d2") as usize, d2.calls());
}

/// Exact distribution of the next `n` tokens under a Markov table model.
fn exact_continuations(m: &TableModel, first: TokenId, n: usize) -> BTreeMap<TokenSeq, f64> {
    let mut out = BTreeMap::from([(vec![first], 1.0)]);
    for _ in 0..n {
        let mut next = BTreeMap::new();
        for (seq, p) in out {
            for (t, q) in m.next(&seq).probs().iter().enumerate() {
                let mut s = seq.clone();
                s.push(TokenId(t as u32));
                next.insert(s, p * q);
            }
        }
        out = next;
    }
    out
}

#[test]
fn sampling_cascade_preserves_target_distribution() {
    let target = TableModel::peaked("t", 4, 0.7, 0, 1.0);
    let drafts: Vec<Arc<dyn LanguageModel>> = vec![
        arc(TableModel::peaked("d1", 4, 0.6, 1, 0.1)),
        arc(TableModel::random("d2", 4, 11, 0.0)),
    ];
    let exact = exact_continuations(&target, TokenId(0), 2);
    let target: Arc<dyn LanguageModel> = Arc::new(target);
    let n = 60_000;
    let mut counts: BTreeMap<TokenSeq, f64> = BTreeMap::new();
    for seed in 0..n {
        let (out, _) = generate(
            &config(&target, &drafts, vec![vec![2, 1], vec![0, 2]], 1.0, DecodeMode::Sampling, 2, seed),
            &[TokenId(0)],
        )
        .unwrap();
        *counts.entry(out).or_default() += 1.0 / n as f64;
    }
    let tv: f64 = exact
        .iter()
        .map(|(s, p)| (counts.get(s).copied().unwrap_or(0.0) - p).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.012, "tv {tv}");
}

#[test]
fn nondeterministic_models_warn_only_in_greedy() {
    struct Flaky(TableModel);
    impl LanguageModel for Flaky {
        fn vocab(&self) -> &Vocab {
            self.0.vocab()
        }
        fn descriptor(&self) -> &str {
            "flaky"
        }
        fn cost_weight(&self) -> f64 {
            1.0
        }
        fn evaluate(&self, tokens: &[TokenId], start: usize) -> csd_core::Result<Vec<Distribution>> {
            self.0.evaluate(tokens, start)
        }
        fn is_deterministic(&self) -> bool {
            false
        }
    }
    let target: Arc<dyn LanguageModel> = Arc::new(Flaky(TableModel::random("t", 5, 1, 1.0)));
    let drafts = vec![arc(TableModel::random("d", 5, 2, 0.1))];
    let (_, greedy) = generate(&config(&target, &drafts, vec![vec![2]], 1.0, DecodeMode::Greedy, 5, 0), &[TokenId(3)]).unwrap();
    let (_, sampled) =
        generate(&config(&target, &drafts, vec![vec![2]], 1.0, DecodeMode::Sampling, 5, 0), &[TokenId(3)]).unwrap();
    assert_eq!(greedy.warnings.len(), 1);
    assert!(sampled.warnings.is_empty());
}

#[test]
fn stop_tokens_and_budget_end_generation() {
    let (target, drafts) = toy_family();
    let mut cfg = config(&target, &drafts[..2], vec![vec![3, 3], vec![0, 3]], 1.0, DecodeMode::Sampling, 1000, 4);
    cfg.budget = Budget::new(1000).with_stop_tokens([TokenId(4)]);
    let (out, trace) = generate(&cfg, &[TokenId(3)]).unwrap();
    assert_eq!(*out.last().unwrap(), TokenId(4));
    assert_eq!(out[1..].iter().filter(|&&t| t == TokenId(4)).count(), 1);
    assert_eq!(trace.tokens_emitted, out.len() - 1);

    let (out, _) = generate(&config(&target, &drafts[..1], vec![vec![7]], 1.0, DecodeMode::Greedy, 13, 0), &[TokenId(3)]).unwrap();
    assert_eq!(out.len(), 14);
}

#[test]
fn invalid_configs_are_rejected() {
    let (target, drafts) = toy_family();
    // Rows do not match the number of drafts.
    assert!(generate(&config(&target, &drafts[..2], vec![vec![2]], 1.0, DecodeMode::Greedy, 5, 0), &[TokenId(3)]).is_err());
    // Internal lenience in sampling mode needs an explicit opt-in.
    let mut cfg = config(&target, &drafts[..2], vec![vec![2, 2], vec![0, 2]], 3.0, DecodeMode::Sampling, 5, 0);
    cfg.allow_inexact_sampling = false;
    assert!(generate(&cfg, &[TokenId(3)]).is_err());
    cfg.allow_inexact_sampling = true;
    assert!(generate(&cfg, &[TokenId(3)]).is_ok());
    // Vocabulary sizes must agree.
    let other = vec![arc(TableModel::random("x", 4, 1, 0.1))];
    assert!(generate(&config(&target, &other, vec![vec![2]], 1.0, DecodeMode::Greedy, 5, 0), &[TokenId(3)]).is_err());
    // Empty prompt.
    assert!(generate(&config(&target, &drafts[..1], vec![vec![2]], 1.0, DecodeMode::Greedy, 5, 0), &[]).is_err());
}

fn copy_corpus() -> (Vec<TokenSeq>, Vocab) {
    // Sequences that repeat their own opening segment.
    let mut x: u64 = 12345;
    let mut rand = move |n: u64| {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (x >> 33) % n
    };
    let seqs = (0..200)
        .map(|_| {
            let head: Vec<TokenId> = (0..12).map(|_| TokenId(3 + rand(20) as u32)).collect();
            let mut s = head.clone();
            s.push(TokenId(23));
            s.extend_from_slice(&head);
            s.push(Vocab::EOS);
            s
        })
        .collect();
    (seqs, Vocab::anonymous(24))
}

fn mean_accepted(trace: &GenerationTrace) -> f64 {
    let reviews: Vec<_> = trace.outer_reviews().collect();
    reviews.iter().map(|r| r.accepted as f64).sum::<f64>() / reviews.len() as f64
}

#[test]
fn max_gram_drafts_longer_accepted_runs_than_bigram_on_copy_text() {
    let (corpus, vocab) = copy_corpus();
    let target = arc(train_ngram(&corpus, vocab.clone(), 4, Smoothing::default_for(4)).unwrap());
    let bigram = Arc::new(train_bigram(&corpus, vocab).unwrap());
    let mag = arc(MagModel::new(Arc::clone(&bigram)));
    let bigram = arc((*bigram).clone());
    let mut with_mag = 0.0;
    let mut with_bigram = 0.0;
    for (i, seq) in corpus.iter().take(20).enumerate() {
        let prompt = seq[..14].to_vec();
        let run = |draft: &Arc<dyn LanguageModel>| {
            generate(
                &config(&target, std::slice::from_ref(draft), vec![vec![10]], 1.0, DecodeMode::Greedy, 11, i as u64),
                &prompt,
            )
            .unwrap()
            .1
        };
        with_mag += mean_accepted(&run(&mag));
        with_bigram += mean_accepted(&run(&bigram));
    }
    assert!(with_mag > with_bigram, "mag {with_mag} vs bigram {with_bigram}");
}
