//! Deterministic synthetic dataset: a small topical grammar for the training
//! corpus and stimuli, cloze norms sampled from the n-gram model, and eye
//! movements whose durations are log-linear in the model log-probabilities.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal};

use crate::error::{IoContext, Result};
use crate::eyedata::{write_fixations, FixationEvent};
use crate::pipeline::{
    score_step, train_lda_step, train_ngram_step, train_rnn_step, AnalysisConfig,
};
use crate::scoring::{
    group_sentences, normalize_token, write_norms, write_stimuli, ClozeNorm,
    RawScore, StimulusToken,
};

#[derive(Debug, Clone)]
pub struct ToyOptions {
    pub seed: u64,
    pub training_documents: usize,
    pub sentences_per_document: usize,
    pub stimulus_sentences: usize,
    pub subjects: usize,
    pub cloze_protocols: u32,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            training_documents: 400,
            sentences_per_document: 5,
            stimulus_sentences: 200,
            subjects: 5,
            cloze_protocols: 40,
        }
    }
}

/// Duration model: `ln mu = intercept + sum coef * predictor + subject`.
pub const TRUE_INTERCEPT: f64 = 5.35;
pub const TRUE_LENGTH: f64 = 0.025;
pub const TRUE_NGRAM: f64 = -0.035;
pub const TRUE_TOPIC: f64 = -0.03;
pub const TRUE_RNN: f64 = -0.035;
/// log10 probability used for a token a model could not score.
pub const UNSCORED_LOG10: f64 = -4.0;

const DETERMINERS: &[&str] = &["the", "a", "this", "that", "every", "some"];
const ADJECTIVES: &[&str] = &[
    "old", "small", "green", "quiet", "bright", "heavy", "strange", "warm", "narrow", "gentle",
    "famous", "empty",
];
const ADVERBS: &[&str] = &["slowly", "often", "never", "quickly", "rarely", "gladly"];
const PREPOSITIONS: &[&str] = &["in", "on", "near", "with", "under", "behind"];
const NOUNS: [&[&str]; 4] = [
    &[
        "ship", "sailor", "harbor", "wave", "anchor", "island", "captain", "storm", "net", "fish",
        "lighthouse", "tide",
    ],
    &[
        "farmer", "cow", "barn", "field", "tractor", "horse", "pig", "fence", "wheat", "goat",
        "orchard", "plough",
    ],
    &[
        "driver", "taxi", "street", "tower", "office", "bus", "market", "clerk", "bridge", "crowd",
        "subway", "lamp",
    ],
    &[
        "teacher", "pupil", "book", "desk", "lesson", "chalk", "library", "exam", "pencil", "map",
        "lecture", "poem",
    ],
];
const VERBS: [&[&str]; 4] = [
    &["sails", "rows", "drifts", "anchors", "floats", "sinks", "steers", "fishes"],
    &["plants", "harvests", "feeds", "milks", "ploughs", "grazes", "waters", "herds"],
    &["drives", "parks", "crosses", "builds", "sells", "rushes", "waits", "shops"],
    &["reads", "writes", "teaches", "studies", "learns", "draws", "grades", "recites"],
];
const OOV_WORDS: &[&str] = &["walrus", "kettle"];

#[derive(Clone, Copy)]
enum Slot {
    Det,
    Adj,
    Adv,
    Prep,
    Noun,
    Verb,
}

use Slot::*;

const TEMPLATES: &[(f64, &[Slot])] = &[
    (0.3, &[Det, Adj, Noun, Verb, Det, Noun]),
    (0.2, &[Det, Noun, Verb, Det, Adj, Noun, Prep, Det, Noun]),
    (0.2, &[Det, Adj, Noun, Adv, Verb, Prep, Det, Noun]),
    (0.2, &[Det, Noun, Verb, Prep, Det, Adj, Noun]),
    (0.1, &[Det, Noun, Adv, Verb, Det, Noun, Prep, Det, Adj, Noun]),
];

/// Zipf-weighted pick.
fn zipf<'a, R: Rng>(rng: &mut R, words: &[&'a str]) -> &'a str {
    let total: f64 = (1..=words.len()).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in words.iter().enumerate() {
        u -= 1.0 / (i + 1) as f64;
        if u <= 0.0 {
            return w;
        }
    }
    words[words.len() - 1]
}

fn sentence<R: Rng>(rng: &mut R, topic: usize) -> Vec<String> {
    let mut u = rng.random::<f64>();
    let mut slots = TEMPLATES[0].1;
    for (p, t) in TEMPLATES {
        slots = t;
        u -= p;
        if u <= 0.0 {
            break;
        }
    }
    let pick_topic = |rng: &mut R| {
        if rng.random_bool(0.85) {
            topic
        } else {
            rng.random_range(0..NOUNS.len())
        }
    };
    slots
        .iter()
        .map(|s| {
            match s {
                Det => zipf(rng, DETERMINERS),
                Adj => zipf(rng, ADJECTIVES),
                Adv => zipf(rng, ADVERBS),
                Prep => zipf(rng, PREPOSITIONS),
                Noun => {
                    let t = pick_topic(rng);
                    zipf(rng, NOUNS[t])
                }
                Verb => {
                    let t = pick_topic(rng);
                    zipf(rng, VERBS[t])
                }
            }
            .to_string()
        })
        .collect()
}

/// Training text: one sentence per line, documents separated by blank lines.
pub fn training_text(rng: &mut ChaCha8Rng, opts: &ToyOptions) -> String {
    let mut out = String::new();
    for d in 0..opts.training_documents {
        let topic = d % NOUNS.len();
        for _ in 0..opts.sentences_per_document {
            let _ = writeln!(out, "{}.", sentence(rng, topic).join(" "));
        }
        out.push('\n');
    }
    out
}

/// Stimulus sentences with a capitalised first word and a final period.
/// A few sentences carry a word absent from the training text.
pub fn stimuli(rng: &mut ChaCha8Rng, opts: &ToyOptions) -> Vec<StimulusToken> {
    let mut out = Vec::new();
    for s in 0..opts.stimulus_sentences {
        let mut words = sentence(rng, s % NOUNS.len());
        if s % 100 == 17 {
            let k = words.len() / 2;
            words[k] = OOV_WORDS[(s / 100) % OOV_WORDS.len()].to_string();
        }
        let n = words.len();
        for (i, w) in words.into_iter().enumerate() {
            let mut token = w;
            if i == 0 {
                let mut c = token.chars();
                token = c.next().map_or(String::new(), |f| f.to_uppercase().chain(c).collect());
            }
            if i + 1 == n {
                token.push('.');
            }
            out.push(StimulusToken {
                sentence_id: s as u32 + 1,
                word_index: i as u32 + 1,
                token,
            });
        }
    }
    out
}

/// Cloze proportions drawn as binomial samples of the n-gram probability.
pub fn cloze_norms(
    rng: &mut ChaCha8Rng,
    stimuli: &[StimulusToken],
    model: &crate::ngram::KnModel,
    cfg: &AnalysisConfig,
    protocols: u32,
) -> Result<Vec<ClozeNorm>> {
    let mut out = Vec::new();
    for (_, toks) in group_sentences(stimuli)? {
        let words: Vec<String> = toks.iter().map(|t| normalize_token(&t.token, &cfg.tokenizer)).collect();
        for (i, t) in toks.iter().enumerate() {
            let p = model.word_prob(&words[..i], &words[i]).unwrap_or(0.0);
            let k = Binomial::new(protocols as u64, p.clamp(0.0, 1.0))
                .expect("valid binomial")
                .sample(rng);
            out.push(ClozeNorm {
                sentence_id: t.sentence_id,
                word_index: t.word_index,
                ccp: k as f64 / protocols as f64,
                n_protocols: protocols,
            });
        }
    }
    Ok(out)
}

/// Expected log duration of a token under the toy truth, without the
/// subject offset.
pub fn true_log_mean(score: &RawScore) -> f64 {
    let lp = |p: Option<f64>| p.filter(|p| *p > 0.0).map_or(UNSCORED_LOG10, f64::log10);
    TRUE_INTERCEPT
        + TRUE_LENGTH * (score.length as f64 - 5.0)
        + TRUE_NGRAM * lp(score.ngram)
        + TRUE_TOPIC * lp(score.topic)
        + TRUE_RNN * lp(score.rnn)
}

fn duration(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let u: f64 = rng.random();
    if u < 0.02 {
        return rng.random_range(40.0..69.0f64).round();
    }
    if u < 0.03 {
        return rng.random_range(1700.0..2400.0f64).round();
    }
    let shape = 6.0;
    Gamma::new(shape, mean / shape)
        .expect("valid gamma")
        .sample(rng)
        .round()
        .max(1.0)
}

/// Left-to-right reading with skips, refixations and short regressions.
pub fn simulate_fixations(
    rng: &mut ChaCha8Rng,
    scores: &[RawScore],
    subjects: usize,
) -> Vec<FixationEvent> {
    let mut by_sentence: Vec<Vec<&RawScore>> = Vec::new();
    for s in scores {
        match by_sentence.last_mut() {
            Some(v) if v[0].sentence_id == s.sentence_id => v.push(s),
            _ => by_sentence.push(vec![s]),
        }
    }
    let offsets = Normal::new(0.0, 0.1).expect("valid normal");
    let mut out = Vec::new();
    for subj in 0..subjects {
        let subject = format!("s{:02}", subj + 1);
        let offset = offsets.sample(rng);
        for words in &by_sentence {
            let mut order = 0u32;
            let mut fixate = |rng: &mut ChaCha8Rng, w: &RawScore, scale: f64, out: &mut Vec<FixationEvent>| {
                order += 1;
                let mean = (true_log_mean(w) + offset).exp() * scale;
                out.push(FixationEvent {
                    subject: subject.clone(),
                    sentence_id: w.sentence_id,
                    word_index: w.word_index,
                    order,
                    duration: duration(rng, mean),
                    landing_letter: rng.random_range(1..=w.length.max(1) as u32),
                });
            };
            for (i, w) in words.iter().enumerate() {
                let skip = if w.length <= 3 { 0.15 } else { 0.03 };
                if i > 0 && rng.random_bool(skip) {
                    continue;
                }
                if rng.random_bool(0.2) {
                    fixate(rng, w, 0.7, &mut out);
                    fixate(rng, w, 0.5, &mut out);
                } else {
                    fixate(rng, w, 1.0, &mut out);
                }
                if i >= 2 && rng.random_bool(0.1) {
                    let j = rng.random_range(1..i);
                    fixate(rng, words[j], 0.8, &mut out);
                }
            }
        }
    }
    out
}

/// Config text for a toy dataset directory.
pub fn config_text(seed: u64) -> String {
    format!(
        "# toy dataset\n\
         corpus = corpus.txt\n\
         vocabulary = vocabulary.tsv\n\
         ngram_model = ngram.bin\n\
         lda_model = lda.bin\n\
         rnn_model = rnn.bin\n\
         stimuli = stimuli.tsv\n\
         norms = norms.tsv\n\
         fixations = fixations.tsv\n\
         measures_table = measures.tsv\n\
         raw_scores = raw_scores.tsv\n\
         predictors = predictors.tsv\n\
         output_dir = reports\n\
         seed = {seed}\n\
         lda_topics = 8\n\
         lda_sweeps = 200\n\
         fold_in_sweeps = 10\n\
         fold_in_samples = 5\n\
         rnn_hidden = 32\n\
         rnn_epochs = 6\n\
         basis_k = 8\n"
    )
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .with_path(path)
}

/// Writes the full toy dataset into `dir`, trains the three models and
/// scores the stimuli. Returns the path of the config file.
pub fn generate(dir: &Path, opts: &ToyOptions) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_path(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cfg_path = dir.join("toy.cfg");
    write_file(&cfg_path, config_text(opts.seed).as_bytes())?;
    let cfg = AnalysisConfig::load(&cfg_path)?;

    let text = training_text(&mut rng, opts);
    write_file(cfg.require(&cfg.corpus, "corpus")?, text.as_bytes())?;
    let stim = stimuli(&mut rng, opts);
    let stim_path = cfg.require(&cfg.stimuli, "stimuli")?;
    write_stimuli(fs::File::create(stim_path).with_path(stim_path)?, &stim)?;

    let ngram = train_ngram_step(&cfg)?;
    let norms = cloze_norms(&mut rng, &stim, &ngram, &cfg, opts.cloze_protocols)?;
    let norms_path = cfg.require(&cfg.norms, "norms")?;
    write_norms(fs::File::create(norms_path).with_path(norms_path)?, &norms)?;
    train_lda_step(&cfg)?;
    train_rnn_step(&cfg)?;
    let (raw, _) = score_step(&cfg)?;

    let events = simulate_fixations(&mut rng, &raw, opts.subjects);
    let fix_path = cfg.require(&cfg.fixations, "fixations")?;
    write_fixations(
        std::io::BufWriter::new(fs::File::create(fix_path).with_path(fix_path)?),
        &events,
    )?;
    Ok(cfg_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyOptions {
        ToyOptions { training_documents: 8, stimulus_sentences: 120, ..ToyOptions::default() }
    }

    #[test]
    fn text_and_stimuli_are_seeded() {
        let o = small();
        let a = training_text(&mut ChaCha8Rng::seed_from_u64(3), &o);
        let b = training_text(&mut ChaCha8Rng::seed_from_u64(3), &o);
        let c = training_text(&mut ChaCha8Rng::seed_from_u64(4), &o);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.split("\n\n").filter(|d| !d.trim().is_empty()).count(), 8);
    }

    #[test]
    fn stimuli_are_ordered_and_include_unseen_words() {
        let st = stimuli(&mut ChaCha8Rng::seed_from_u64(1), &small());
        let groups = group_sentences(&st).unwrap();
        assert_eq!(groups.len(), 120);
        for (_, toks) in &groups {
            assert!(toks.iter().enumerate().all(|(i, t)| t.word_index == i as u32 + 1));
            assert!(toks.last().unwrap().token.ends_with('.'));
            assert!(toks[0].token.chars().next().unwrap().is_uppercase());
        }
        assert!(st.iter().any(|t| OOV_WORDS.contains(&t.token.trim_end_matches('.'))));
    }

    #[test]
    fn higher_probability_means_shorter_mean() {
        let score = |p: f64| RawScore {
            sentence_id: 1,
            word_index: 2,
            token: "dog".into(),
            length: 3,
            frequency_class: None,
            ccp: None,
            n_protocols: None,
            ngram: Some(p),
            topic: Some(p),
            rnn: Some(p),
        };
        assert!(true_log_mean(&score(0.5)) < true_log_mean(&score(0.01)));
        let mut unscored = score(0.5);
        unscored.ngram = None;
        assert_eq!(true_log_mean(&unscored), true_log_mean(&score(0.5)) - TRUE_NGRAM * (0.5f64.log10() - UNSCORED_LOG10));
    }
}
