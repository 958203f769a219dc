//! Tokenization, vocabularies and sentence corpora.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, IoContext, Result};

pub type WordId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizerRules {
    pub lowercase: bool,
    pub strip_punctuation: bool,
}

impl Default for TokenizerRules {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

/// Whitespace split; optionally strips leading/trailing non-alphanumeric
/// characters and lowercases. Tokens that become empty are dropped.
pub fn tokenize(text: &str, rules: &TokenizerRules) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let t = if rules.strip_punctuation {
                raw.trim_matches(|c: char| !c.is_alphanumeric())
            } else {
                raw
            };
            if t.is_empty() {
                None
            } else if rules.lowercase {
                Some(t.to_lowercase())
            } else {
                Some(t.to_string())
            }
        })
        .collect()
}

/// Tokenized sentences with optional document grouping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenizedText {
    pub sentences: Vec<Vec<String>>,
    pub documents: Vec<Range<usize>>,
}

/// One sentence per line; blank lines separate documents. Without any
/// separator no grouping is recorded.
pub fn parse_corpus_text(text: &str, rules: &TokenizerRules) -> TokenizedText {
    let mut out = TokenizedText::default();
    let mut doc_start = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            if out.sentences.len() > doc_start {
                out.documents.push(doc_start..out.sentences.len());
            }
            doc_start = out.sentences.len();
            continue;
        }
        let toks = tokenize(line, rules);
        if !toks.is_empty() {
            out.sentences.push(toks);
        }
    }
    if out.sentences.len() > doc_start {
        out.documents.push(doc_start..out.sentences.len());
    }
    if out.documents.len() < 2 {
        out.documents.clear();
    }
    out
}

pub fn read_corpus_file(path: &Path, rules: &TokenizerRules) -> Result<TokenizedText> {
    let text = std::fs::read_to_string(path).with_path(path)?;
    Ok(parse_corpus_text(&text, rules))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, WordId>,
    total_tokens: u64,
    f_max: u64,
}

impl Vocabulary {
    /// Builds from `(word, count)` pairs; ids follow descending count, ties lexicographic.
    pub fn from_counts(mut entries: Vec<(String, u64)>) -> Result<Self> {
        entries.retain(|(_, c)| *c > 0);
        if entries.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut index = HashMap::with_capacity(entries.len());
        let mut words = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (i, (w, c)) in entries.into_iter().enumerate() {
            if index.insert(w.clone(), i as WordId).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word `{w}`")));
            }
            words.push(w);
            counts.push(c);
        }
        let total_tokens = counts.iter().sum();
        let f_max = counts[0];
        Ok(Self {
            words,
            counts,
            index,
            total_tokens,
            f_max,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    pub fn count(&self, id: WordId) -> u64 {
        self.counts[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn f_max(&self) -> u64 {
        self.f_max
    }

    /// Frequency class `round(log2(f_max / f))`, rounding halves up.
    pub fn frequency_class(&self, word: &str) -> Result<u32> {
        let id = self
            .id(word)
            .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))?;
        Ok(frequency_class_of(self.f_max, self.count(id)))
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, (w, c)) in self.words.iter().zip(&self.counts).enumerate() {
            writeln!(out, "{w}\t{i}\t{c}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.with_path(path)?;
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: message.to_string(),
            };
            let mut cols = line.split('\t');
            let word = cols.next().ok_or_else(|| parse_err("missing word"))?;
            let _id = cols.next().ok_or_else(|| parse_err("missing id"))?;
            let count = cols
                .next()
                .ok_or_else(|| parse_err("missing count"))?
                .parse::<u64>()
                .map_err(|_| parse_err("count is not an integer"))?;
            entries.push((word.to_string(), count));
        }
        Self::from_counts(entries)
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).with_path(path)?;
        Self::read_tsv(std::io::BufReader::new(f), path)
    }
}

pub fn frequency_class_of(f_max: u64, count: u64) -> u32 {
    let ratio = f_max as f64 / count as f64;
    (ratio.log2() + 0.5).floor().max(0.0) as u32
}

/// Counts tokens over all sentences and keeps words seen at least `min_count` times.
pub fn build_vocabulary(sentences: &[Vec<String>], min_count: u64) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for t in s {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|(w, c)| (w.to_string(), c))
        .collect();
    Vocabulary::from_counts(entries)
}

/// Sentences as token ids, grouped into documents.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceCorpus {
    sentences: Vec<Vec<WordId>>,
    documents: Vec<Range<usize>>,
}

impl SentenceCorpus {
    /// Encodes tokenized text; tokens missing from `vocab` are dropped and
    /// sentences left empty are removed. Without document grouping every
    /// sentence is its own document.
    pub fn encode(text: &TokenizedText, vocab: &Vocabulary) -> Result<Self> {
        let groups: Vec<Range<usize>> = if text.documents.is_empty() {
            vec![0..text.sentences.len()]
        } else {
            text.documents.clone()
        };
        let explicit_docs = !text.documents.is_empty();
        let mut sentences = Vec::new();
        let mut documents = Vec::new();
        for g in groups {
            let start = sentences.len();
            for s in &text.sentences[g] {
                let ids: Vec<WordId> = s.iter().filter_map(|t| vocab.id(t)).collect();
                if !ids.is_empty() {
                    sentences.push(ids);
                    if !explicit_docs {
                        documents.push(sentences.len() - 1..sentences.len());
                    }
                }
            }
            if explicit_docs && sentences.len() > start {
                documents.push(start..sentences.len());
            }
        }
        Self::new(sentences, documents, vocab.len())
    }

    pub fn new(
        sentences: Vec<Vec<WordId>>,
        documents: Vec<Range<usize>>,
        vocab_size: usize,
    ) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if sentences.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("empty sentence".into()));
        }
        if let Some(bad) = sentences.iter().flatten().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary")));
        }
        let documents = if documents.is_empty() {
            (0..sentences.len()).map(|i| i..i + 1).collect()
        } else {
            documents
        };
        Ok(Self {
            sentences,
            documents,
        })
    }

    pub fn sentences(&self) -> &[Vec<WordId>] {
        &self.sentences
    }

    pub fn documents(&self) -> &[Range<usize>] {
        &self.documents
    }

    /// Tokens of each document, concatenated over its sentences.
    pub fn document_tokens(&self) -> Vec<Vec<WordId>> {
        self.documents
            .iter()
            .map(|r| self.sentences[r.clone()].concat())
            .collect()
    }

    pub fn decode(&self, vocab: &Vocabulary) -> Vec<Vec<String>> {
        self.sentences
            .iter()
            .map(|s| s.iter().map(|&id| vocab.word(id).to_string()).collect())
            .collect()
    }
}

/// Tokenize, build the vocabulary and encode in one step.
pub fn load_training_corpus(
    path: &Path,
    rules: &TokenizerRules,
    min_count: u64,
) -> Result<(Vocabulary, SentenceCorpus)> {
    let text = read_corpus_file(path, rules)?;
    let vocab = build_vocabulary(&text.sentences, min_count)?;
    let corpus = SentenceCorpus::encode(&text, &vocab)?;
    Ok((vocab, corpus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sents(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| tokenize(l, &TokenizerRules::default()))
            .collect()
    }

    #[test]
    fn tokenize_examples() {
        let r = TokenizerRules::default();
        assert!(tokenize("", &r).is_empty());
        assert_eq!(tokenize("The drunk driver", &r), ["the", "drunk", "driver"]);
        assert_eq!(
            tokenize("Bill complained, loudly.", &r),
            ["bill", "complained", "loudly"]
        );
        assert_eq!(tokenize("Über Andendörfern ...", &r), ["über", "andendörfern"]);
        assert_eq!(tokenize("don't -- stop", &r), ["don't", "stop"]);
        let keep = TokenizerRules {
            lowercase: false,
            strip_punctuation: false,
        };
        assert_eq!(tokenize("Hi, there.", &keep), ["Hi,", "there."]);
    }

    #[test]
    fn vocabulary_examples() {
        let v = build_vocabulary(&sents(&["a a b"]), 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.count(v.id("a").unwrap()), 2);
        assert_eq!(v.count(v.id("b").unwrap()), 1);
        assert_eq!(v.total_tokens(), 3);
        assert_eq!(v.f_max(), 2);

        let v = build_vocabulary(&sents(&["a a b"]), 2).unwrap();
        assert_eq!(v.words(), ["a"]);

        assert!(matches!(build_vocabulary(&[], 1), Err(Error::EmptyCorpus)));
        assert!(build_vocabulary(&sents(&["a"]), 0).is_err());
    }

    #[test]
    fn vocabulary_order_by_count_then_lexicographic() {
        // counts: the=3, cat=2, sat=2, a=1, mat=1, on=1
        let v = build_vocabulary(&sents(&["the cat sat", "the cat on", "a mat sat the"]), 1).unwrap();
        assert_eq!(v.words(), ["the", "cat", "sat", "a", "mat", "on"]);
    }

    #[test]
    fn frequency_class_examples() {
        assert_eq!(frequency_class_of(1000, 1000), 0);
        assert_eq!(frequency_class_of(1000, 125), 3);
        assert_eq!(frequency_class_of(1000, 300), 2);
        // log2(2^1.5) = 1.5 rounds up
        assert_eq!(frequency_class_of(2828428, 1000000), 2);
        let v = build_vocabulary(&sents(&["a a a a b"]), 1).unwrap();
        assert_eq!(v.frequency_class("a").unwrap(), 0);
        assert_eq!(v.frequency_class("b").unwrap(), 2);
        assert!(matches!(v.frequency_class("zzz"), Err(Error::OutOfVocabulary(_))));
    }

    #[test]
    fn documents_from_blank_lines() {
        let t = parse_corpus_text("a b\nb c\n\n\nc d\n", &TokenizerRules::default());
        assert_eq!(t.sentences.len(), 3);
        assert_eq!(t.documents, vec![0..2, 2..3]);
        let v = build_vocabulary(&t.sentences, 1).unwrap();
        let c = SentenceCorpus::encode(&t, &v).unwrap();
        assert_eq!(c.document_tokens().len(), 2);
        assert_eq!(c.document_tokens()[0].len(), 4);

        let flat = parse_corpus_text("a b\nb c\n", &TokenizerRules::default());
        let c = SentenceCorpus::encode(&flat, &v).unwrap();
        assert_eq!(c.documents(), &[0..1, 1..2]);
    }

    #[test]
    fn tsv_round_trip() {
        let v = build_vocabulary(&sents(&["x y y z z z"]), 1).unwrap();
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "z\t0\t3\ny\t1\t2\nx\t2\t1\n");
        let back = Vocabulary::read_tsv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(s in "\\PC{0,40}") {
            let r = TokenizerRules::default();
            let once = tokenize(&s, &r);
            let twice = tokenize(&once.join(" "), &r);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn frequency_class_monotone(fmax in 1u64..1_000_000, a in 1u64..1_000_000, b in 1u64..1_000_000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let fmax = fmax.max(hi);
            prop_assert!(frequency_class_of(fmax, hi) <= frequency_class_of(fmax, lo));
        }

        #[test]
        fn encode_decode_round_trip(lines in proptest::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,5}", 1..8)) {
            let text = parse_corpus_text(&lines.join("\n"), &TokenizerRules::default());
            let vocab = build_vocabulary(&text.sentences, 1).unwrap();
            let corpus = SentenceCorpus::encode(&text, &vocab).unwrap();
            prop_assert_eq!(corpus.decode(&vocab), text.sentences);
        }
    }
}
