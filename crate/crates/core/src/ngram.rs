//! Interpolated Kneser-Ney n-gram model.
//!
//! Token space: word ids `0..V`, then `BOS = V` and `EOS = V + 1`. Each
//! sentence is padded with `n - 1` BOS symbols and a single EOS; EOS is part
//! of the predicted event space, BOS never is.
//!
//! Lower orders use continuation counts (number of distinct left contexts),
//! except for n-grams starting with BOS, which cannot be extended to the left
//! and keep their raw counts.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::binio::*;
use crate::corpus::{SentenceCorpus, Vocabulary, WordId};
use crate::error::{Error, IoContext, Result};

pub const DEFAULT_ORDER: usize = 3;
pub const FALLBACK_DISCOUNT: f64 = 0.75;
const MAGIC: &[u8; 5] = b"LPKN1";
const UNKNOWN: WordId = WordId::MAX;

type Gram = Vec<WordId>;

/// Raw window counts for every order `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramCounts {
    order: usize,
    vocab_size: usize,
    counts: Vec<HashMap<Gram, u64>>,
}

impl NGramCounts {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn bos(&self) -> WordId {
        self.vocab_size as WordId
    }

    pub fn eos(&self) -> WordId {
        self.vocab_size as WordId + 1
    }

    pub fn count(&self, gram: &[WordId]) -> u64 {
        if gram.is_empty() || gram.len() > self.order {
            return 0;
        }
        self.counts[gram.len() - 1].get(gram).copied().unwrap_or(0)
    }

    /// All counted k-grams of one order.
    pub fn grams(&self, k: usize) -> impl Iterator<Item = (&[WordId], u64)> {
        self.counts[k - 1].iter().map(|(g, &c)| (g.as_slice(), c))
    }

    /// Adds another shard's counts.
    pub fn merge(&mut self, other: &NGramCounts) -> Result<()> {
        if other.order != self.order || other.vocab_size != self.vocab_size {
            return Err(Error::InvalidArgument("cannot merge counts of different shape".into()));
        }
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            for (g, c) in theirs {
                *mine.entry(g.clone()).or_default() += c;
            }
        }
        Ok(())
    }
}

pub fn count_ngrams(corpus: &SentenceCorpus, vocab_size: usize, n: usize) -> Result<NGramCounts> {
    if n < 1 {
        return Err(Error::InvalidArgument("n-gram order must be >= 1".into()));
    }
    let bos = vocab_size as WordId;
    let eos = bos + 1;
    let mut counts = vec![HashMap::new(); n];
    let mut padded = Vec::new();
    for s in corpus.sentences() {
        padded.clear();
        padded.extend(std::iter::repeat_n(bos, n - 1));
        padded.extend_from_slice(s);
        padded.push(eos);
        for k in 1..=n {
            for w in padded.windows(k) {
                *counts[k - 1].entry(w.to_vec()).or_insert(0u64) += 1;
            }
        }
    }
    Ok(NGramCounts {
        order: n,
        vocab_size,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnModel {
    order: usize,
    vocab: Vocabulary,
    discounts: Vec<f64>,
    /// Per order: discounted mass `(a(h w) - D) / a(h)` keyed by `h w`.
    probs: Vec<HashMap<Gram, f64>>,
    /// Per order: interpolation weight `D * N1+(h .) / a(h)` keyed by `h`.
    gammas: Vec<HashMap<Gram, f64>>,
}

/// Adjusted counts of order `k`: raw counts at the top order and for
/// BOS-initial grams, continuation counts otherwise. BOS-final grams are
/// excluded because BOS is never predicted.
fn adjusted_counts(counts: &NGramCounts, k: usize) -> HashMap<Gram, u64> {
    let bos = counts.bos();
    let mut out: HashMap<Gram, u64> = HashMap::new();
    if k == counts.order {
        for (g, &c) in &counts.counts[k - 1] {
            if *g.last().unwrap() != bos {
                out.insert(g.clone(), c);
            }
        }
        return out;
    }
    for (g, &c) in &counts.counts[k - 1] {
        if *g.last().unwrap() != bos && g[0] == bos {
            out.insert(g.clone(), c);
        }
    }
    for g in counts.counts[k].keys() {
        let suffix = &g[1..];
        if *suffix.last().unwrap() != bos && suffix[0] != bos {
            *out.entry(suffix.to_vec()).or_default() += 1;
        }
    }
    out
}

/// Counts-of-counts estimate `n1 / (n1 + 2 n2)`; `None` when outside (0, 1).
pub fn estimate_discount(adjusted: impl IntoIterator<Item = u64>) -> (Option<f64>, u64, u64) {
    let (mut n1, mut n2) = (0u64, 0u64);
    for c in adjusted {
        match c {
            1 => n1 += 1,
            2 => n2 += 1,
            _ => {}
        }
    }
    let d = n1 as f64 / (n1 as f64 + 2.0 * n2 as f64);
    let valid = n1 > 0 && n2 > 0 && d > 0.0 && d < 1.0;
    (valid.then_some(d), n1, n2)
}

pub fn estimate_kn(
    counts: &NGramCounts,
    vocab: Vocabulary,
    discounts: Option<&[f64]>,
) -> Result<KnModel> {
    let n = counts.order;
    if vocab.len() != counts.vocab_size {
        return Err(Error::InvalidArgument(format!(
            "vocabulary size {} does not match counts ({})",
            vocab.len(),
            counts.vocab_size
        )));
    }
    if let Some(d) = discounts {
        if d.len() != n || d.iter().any(|&x| !(0.0..1.0).contains(&x)) {
            return Err(Error::InvalidArgument(format!(
                "expected {n} discounts in [0, 1), got {d:?}"
            )));
        }
    }
    let mut probs = Vec::with_capacity(n);
    let mut gammas = Vec::with_capacity(n);
    let mut used = Vec::with_capacity(n);
    for k in 1..=n {
        let adjusted = adjusted_counts(counts, k);
        let d = match discounts {
            Some(d) => d[k - 1],
            None => {
                let (est, n1, n2) = estimate_discount(adjusted.values().copied());
                est.unwrap_or_else(|| {
                    log::warn!(
                        "order {k}: degenerate counts-of-counts (n1={n1}, n2={n2}); using D={FALLBACK_DISCOUNT}"
                    );
                    FALLBACK_DISCOUNT
                })
            }
        };
        let mut totals: HashMap<&[WordId], (u64, u64)> = HashMap::new();
        for (g, &a) in &adjusted {
            let e = totals.entry(&g[..k - 1]).or_default();
            e.0 += a;
            e.1 += 1;
        }
        let p: HashMap<Gram, f64> = adjusted
            .iter()
            .map(|(g, &a)| {
                let total = totals[&g[..k - 1]].0 as f64;
                (g.clone(), (a as f64 - d).max(0.0) / total)
            })
            .collect();
        let gm: HashMap<Gram, f64> = totals
            .iter()
            .map(|(h, &(total, types))| (h.to_vec(), d * types as f64 / total as f64))
            .collect();
        probs.push(p);
        gammas.push(gm);
        used.push(d);
    }
    Ok(KnModel {
        order: n,
        vocab,
        discounts: used,
        probs,
        gammas,
    })
}

/// Counts and estimates in one step.
pub fn train_kn(
    corpus: &SentenceCorpus,
    vocab: Vocabulary,
    n: usize,
    discounts: Option<&[f64]>,
) -> Result<KnModel> {
    let counts = count_ngrams(corpus, vocab.len(), n)?;
    estimate_kn(&counts, vocab, discounts)
}

impl KnModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    pub fn bos(&self) -> WordId {
        self.vocab.len() as WordId
    }

    pub fn eos(&self) -> WordId {
        self.vocab.len() as WordId + 1
    }

    fn event_count(&self) -> f64 {
        (self.vocab.len() + 1) as f64
    }

    /// Interpolated probability of `w` after `context` (the most recent
    /// `order - 1` tokens are used; shorter contexts are BOS-padded).
    pub fn prob(&self, w: WordId, context: &[WordId]) -> Result<f64> {
        if (w as usize) >= self.vocab.len() && w != self.eos() {
            return Err(Error::OutOfVocabulary(format!("id {w}")));
        }
        let h = self.history(context);
        let mut key = Vec::with_capacity(self.order);
        Ok(self.interpolated(w, &h, &mut key))
    }

    fn history(&self, context: &[WordId]) -> Vec<WordId> {
        let need = self.order - 1;
        let tail = &context[context.len().saturating_sub(need)..];
        let mut h = vec![self.bos(); need - tail.len()];
        h.extend(tail.iter().map(|&t| {
            if (t as usize) < self.vocab.len() || t == self.bos() || t == self.eos() {
                t
            } else {
                UNKNOWN
            }
        }));
        h
    }

    fn interpolated(&self, w: WordId, h: &[WordId], key: &mut Vec<WordId>) -> f64 {
        let k = h.len() + 1;
        let lower = if k == 1 {
            1.0 / self.event_count()
        } else {
            self.interpolated(w, &h[1..], key)
        };
        match self.gammas[k - 1].get(h) {
            Some(&gamma) => {
                key.clear();
                key.extend_from_slice(h);
                key.push(w);
                self.probs[k - 1].get(key.as_slice()).copied().unwrap_or(0.0) + gamma * lower
            }
            None => lower,
        }
    }

    /// log10 p(w | history); `history` holds the preceding tokens (any length).
    pub fn logprob(&self, w: WordId, history: &[WordId]) -> Result<f64> {
        Ok(self.prob(w, history)?.log10())
    }

    /// Per-token log10 probabilities; `None` marks out-of-vocabulary tokens.
    /// Ids outside the vocabulary also back off when they appear in a history.
    pub fn score_sentence(&self, tokens: &[WordId]) -> Vec<Option<f64>> {
        (0..tokens.len())
            .map(|i| self.logprob(tokens[i], &tokens[..i]).ok())
            .collect()
    }

    /// Maps surface words to ids, using an out-of-range id for unknown words.
    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<WordId> {
        words
            .iter()
            .map(|w| self.vocab.id(w.as_ref()).unwrap_or(UNKNOWN))
            .collect()
    }

    /// Probability of `target` after the surface-form `history`.
    pub fn word_prob<S: AsRef<str>>(&self, history: &[S], target: &str) -> Result<f64> {
        let w = self
            .vocab
            .id(target)
            .ok_or_else(|| Error::OutOfVocabulary(target.to_string()))?;
        self.prob(w, &self.encode_words(history))
    }

    fn symbol(&self, id: WordId) -> &str {
        if id == self.bos() {
            "<s>"
        } else if id == self.eos() {
            "</s>"
        } else {
            self.vocab.word(id)
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        write_magic(&mut out, MAGIC)?;
        write_u32(&mut out, self.order as u32)?;
        write_vocab(&mut out, &self.vocab)?;
        write_f64s(&mut out, &self.discounts)?;
        for k in 0..self.order {
            for table in [&self.probs[k], &self.gammas[k]] {
                let mut entries: Vec<(&Gram, &f64)> = table.iter().collect();
                entries.sort_by(|a, b| a.0.cmp(b.0));
                write_u64(&mut out, entries.len() as u64)?;
                for (g, &v) in entries {
                    for &t in g {
                        write_u32(&mut out, t)?;
                    }
                    write_f64(&mut out, v)?;
                }
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        expect_magic(&mut input, MAGIC)?;
        let order = read_u32(&mut input)? as usize;
        if order == 0 || order > 16 {
            return Err(Error::BadModelFile(format!("implausible order {order}")));
        }
        let vocab = read_vocab(&mut input)?;
        let discounts = read_f64s(&mut input)?;
        if discounts.len() != order {
            return Err(Error::BadModelFile("discount count does not match order".into()));
        }
        let mut probs = Vec::with_capacity(order);
        let mut gammas = Vec::with_capacity(order);
        for k in 1..=order {
            for (width, dest) in [(k, &mut probs), (k - 1, &mut gammas)] {
                let n = read_len(&mut input, 1 << 40)?;
                let mut table = HashMap::with_capacity(n);
                for _ in 0..n {
                    let g: Gram = (0..width)
                        .map(|_| read_u32(&mut input))
                        .collect::<Result<_>>()?;
                    table.insert(g, read_f64(&mut input)?);
                }
                dest.push(table);
            }
        }
        Ok(Self {
            order,
            vocab,
            discounts,
            probs,
            gammas,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).with_path(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush().with_path(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).with_path(path)?;
        Self::read(std::io::BufReader::new(f))
    }

    /// ARPA-style text dump: interpolated log10 probabilities and log10
    /// interpolation weights. Histories without an entry of their own
    /// (e.g. `<s>`) are listed with probability -99.
    pub fn write_arpa<W: Write>(&self, mut out: W) -> Result<()> {
        let mut sections: Vec<Vec<(Gram, f64, Option<f64>)>> = Vec::with_capacity(self.order);
        let mut key = Vec::new();
        for k in 1..=self.order {
            let mut grams: Vec<Gram> = self.probs[k - 1].keys().cloned().collect();
            if k < self.order {
                for h in self.gammas[k].keys() {
                    if !self.probs[k - 1].contains_key(h) {
                        grams.push(h.clone());
                    }
                }
            }
            grams.sort();
            let rows = grams
                .into_iter()
                .map(|g| {
                    let last = *g.last().unwrap();
                    let lp = if last == self.bos() {
                        -99.0
                    } else {
                        self.interpolated(last, &g[..k - 1], &mut key).log10()
                    };
                    let bo = if k < self.order {
                        self.gammas[k].get(&g).map(|v| v.log10())
                    } else {
                        None
                    };
                    (g, lp, bo)
                })
                .collect();
            sections.push(rows);
        }
        writeln!(out, "\\data\\")?;
        for (k, s) in sections.iter().enumerate() {
            writeln!(out, "ngram {}={}", k + 1, s.len())?;
        }
        for (k, s) in sections.iter().enumerate() {
            writeln!(out, "\n\\{}-grams:", k + 1)?;
            for (g, lp, bo) in s {
                let words: Vec<&str> = g.iter().map(|&t| self.symbol(t)).collect();
                match bo {
                    Some(b) => writeln!(out, "{lp:.7}\t{}\t{b:.7}", words.join(" "))?,
                    None => writeln!(out, "{lp:.7}\t{}", words.join(" "))?,
                }
            }
        }
        writeln!(out, "\n\\end\\")?;
        Ok(())
    }
}
