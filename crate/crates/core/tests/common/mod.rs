#![allow(dead_code)]

pub mod kn_oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use readpred::corpus::{build_vocabulary, parse_corpus_text, SentenceCorpus, TokenizerRules, Vocabulary};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn corpus_from(text: &str) -> (Vocabulary, SentenceCorpus) {
    let t = parse_corpus_text(text, &TokenizerRules::default());
    let v = build_vocabulary(&t.sentences, 1).unwrap();
    let c = SentenceCorpus::encode(&t, &v).unwrap();
    (v, c)
}

/// Random corpus text over words `w0..w{vocab}` with a skewed word distribution.
pub fn random_corpus_text<R: rand::Rng>(rng: &mut R, sentences: usize, vocab: usize) -> String {
    let mut out = String::new();
    for _ in 0..sentences {
        let len = rng.random_range(1..=8);
        let words: Vec<String> = (0..len)
            .map(|_| {
                let u: f64 = rng.random();
                format!("w{}", (u * u * vocab as f64) as usize)
            })
            .collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    out
}

/// 200 single-topic documents: 100 over words `a0..a9`, 100 over `b0..b9`.
pub fn two_topic_corpus_text<R: rand::Rng>(rng: &mut R) -> String {
    let mut out = String::new();
    for d in 0..200 {
        let prefix = if d % 2 == 0 { "a" } else { "b" };
        for _ in 0..2 {
            let words: Vec<String> = (0..10)
                .map(|_| format!("{prefix}{}", rng.random_range(0..10)))
                .collect();
            out.push_str(&words.join(" "));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Token-level purity of the topics against the a/b word labels.
pub fn topic_purity(m: &readpred::topics::LdaModel) -> f64 {
    let v = m.vocab();
    let mut total = 0u64;
    let mut pure = 0u64;
    for k in 0..m.topics() {
        let (mut a, mut b) = (0u64, 0u64);
        for w in 0..v.len() as u32 {
            let c = m.count(k, w) as u64;
            if v.word(w).starts_with('a') { a += c } else { b += c }
        }
        total += a + b;
        pure += a.max(b);
    }
    pure as f64 / total as f64
}

/// Event-level data with a log-linear effect of `ngram_present` of size
/// `effect` per log10 unit. Every other score column is independent noise.
pub fn planted_data<R: rand::Rng>(rng: &mut R, n: usize, effect: f64) -> readpred::pipeline::AnalysisData {
    use rand_distr::{Distribution, Gamma};
    use readpred::eyedata::Measure;
    use readpred::scoring::{frequency_column, length_column, score_column, Position, Source};

    let mut frame = readpred_gam::Frame::new();
    frame.insert("landing", (0..n).map(|_| rng.random::<f64>()).collect());
    let length: Vec<f64> = (0..n).map(|_| rng.random_range(2..=10) as f64).collect();
    frame.insert(length_column(Position::Present), length.clone());
    frame.insert(
        frequency_column(Position::Present),
        (0..n).map(|_| rng.random_range(0..=15) as f64).collect(),
    );
    let mut planted = Vec::new();
    for s in Source::ALL {
        for p in Position::ALL {
            let col: Vec<f64> = (0..n)
                .map(|_| match s {
                    Source::Ccp => rng.random_range(-2.5..2.5),
                    _ => rng.random_range(-4.0..-0.5),
                })
                .collect();
            if (s, p) == (Source::Ngram, Position::Present) {
                planted = col.clone();
            }
            frame.insert(score_column(s, p), col);
        }
    }
    let shape = 5.0;
    let response = (0..n)
        .map(|i| {
            let mu = (5.4 + 0.02 * length[i] - effect * planted[i]).exp();
            Gamma::new(shape, mu / shape).unwrap().sample(rng)
        })
        .collect();
    readpred::pipeline::AnalysisData {
        measure: Measure::Gd,
        response,
        frame,
        unmatched: 0,
    }
}

/// Small baseline and the planted and null sources of [`planted_data`].
pub fn planted_design() -> readpred::pipeline::DesignOptions {
    use readpred::scoring::Source;
    readpred::pipeline::DesignOptions {
        baseline: vec!["landing".into(), "length_present".into(), "freq_present".into()],
        sources: vec![Source::Ngram, Source::Topic],
        basis_k: 6,
        ..Default::default()
    }
}
