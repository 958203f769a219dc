mod common;

use common::{corpus_from, rng, topic_purity, two_topic_corpus_text};
use proptest::prelude::*;
use readpred::topics::{train_lda, train_lda_observed, InferenceConfig, LdaConfig, LdaModel};

fn two_topic_model(seed: u64, sweeps: usize) -> LdaModel {
    let text = two_topic_corpus_text(&mut rng(seed));
    let (v, c) = corpus_from(&text);
    assert_eq!(c.documents().len(), 200);
    let cfg = LdaConfig {
        topics: 2,
        sweeps,
        seed,
        ..LdaConfig::default()
    };
    train_lda(&c, v, &cfg).unwrap()
}

#[test]
fn disjoint_vocabularies_are_separated() {
    let pure = (0..5)
        .filter(|&s| topic_purity(&two_topic_model(s, 200)) >= 0.9)
        .count();
    assert!(pure >= 4, "{pure} of 5 seeds pure");
}

#[test]
fn history_shifts_the_mixture() {
    let m = two_topic_model(1, 100);
    let v = m.vocab();
    let cfg = InferenceConfig::default();
    let a_hist = ["a1", "a2", "a3"];
    let b_hist = ["b1", "b2", "b3"];
    let after_a = m.word_prob(&a_hist, "a5", &cfg).unwrap();
    let after_b = m.word_prob(&b_hist, "a5", &cfg).unwrap();
    assert!(after_a > after_b, "{after_a} vs {after_b}");

    // a single word owned by one topic makes that topic dominant
    let w = v.id("b4").unwrap();
    let owner = (0..2).max_by_key(|&k| m.count(k, w)).unwrap();
    let theta = m.infer_theta(&[w], &cfg);
    assert!(theta[owner] > theta[1 - owner]);
}

#[test]
fn empty_history_without_target_is_topic_average() {
    let m = two_topic_model(2, 50);
    let cfg = InferenceConfig {
        include_target: false,
        ..InferenceConfig::default()
    };
    for w in 0..m.vocab().len() as u32 {
        let mean = (0..2).map(|k| m.phi(k, w)).sum::<f64>() / 2.0;
        let p = m.topic_word_prob(w, &[], &cfg).unwrap();
        assert!((p - mean).abs() < 1e-15);
    }
}

#[test]
fn target_is_part_of_the_inferred_document() {
    let m = two_topic_model(3, 50);
    let cfg = InferenceConfig::default();
    let a = m.vocab().id("a0").unwrap();
    let b = m.vocab().id("b0").unwrap();
    let theta = m.infer_theta(&[b, a], &cfg);
    assert_eq!(m.topic_word_prob(a, &[b], &cfg).unwrap(), m.mixture_prob(a, &theta));
}

#[test]
fn identical_seeds_identical_models() {
    let m1 = two_topic_model(4, 20);
    let m2 = two_topic_model(4, 20);
    assert_eq!(m1, m2);
    let cfg = InferenceConfig::default();
    let h = ["a1", "b2"];
    assert_eq!(m1.word_prob(&h, "a3", &cfg).unwrap(), m2.word_prob(&h, "a3", &cfg).unwrap());
}

#[test]
fn recount_every_ten_sweeps() {
    let text = two_topic_corpus_text(&mut rng(5));
    let (v, c) = corpus_from(&text);
    let cfg = LdaConfig { topics: 4, sweeps: 30, ..LdaConfig::default() };
    let total: usize = c.sentences().iter().map(Vec::len).sum();
    train_lda_observed(&c, v, &cfg, |s, st, docs| {
        assert_eq!(st.topic_totals.iter().sum::<u64>() as usize, total);
        if s % 10 == 0 {
            assert!(st.counts_consistent(docs));
        }
    })
    .unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mixture_normalizes_for_any_theta(raw in prop::collection::vec(0.01f64..1.0, 3), seed in 0u64..4) {
        let (v, c) = corpus_from("a b c d\ne f g\n\na a e\nb g g c");
        let m = train_lda(&c, v.clone(), &LdaConfig { topics: 3, sweeps: 10, seed, ..LdaConfig::default() }).unwrap();
        let s: f64 = raw.iter().sum();
        let theta: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let total: f64 = (0..v.len() as u32).map(|w| m.mixture_prob(w, &theta)).sum();
        prop_assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn retrieval_probabilities_in_unit_interval(hist in prop::collection::vec(0u32..7, 0..6), w in 0u32..7) {
        let (v, c) = corpus_from("a b c d\ne f g\n\na a e\nb g g c");
        let m = train_lda(&c, v, &LdaConfig { topics: 3, sweeps: 10, ..LdaConfig::default() }).unwrap();
        let cfg = InferenceConfig::default();
        let theta = m.infer_theta(&hist, &cfg);
        prop_assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let p = m.topic_word_prob(w, &hist, &cfg).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }
}
