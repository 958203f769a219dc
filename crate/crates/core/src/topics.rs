//! LDA topic model: collapsed Gibbs training and fold-in retrieval of
//! p(w | sentence history).

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::*;
use crate::corpus::{SentenceCorpus, Vocabulary, WordId};
use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 5] = b"LPLD1";

#[derive(Debug, Clone, PartialEq)]
pub struct LdaConfig {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            topics: 200,
            alpha: 0.25,
            beta: 0.001,
            sweeps: 1000,
            seed: 1,
        }
    }
}

/// Fold-in settings for retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub fold_in_sweeps: usize,
    /// θ is averaged over this many final sweeps.
    pub samples: usize,
    pub seed: u64,
    /// Whether the target word is part of the inferred document.
    pub include_target: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            fold_in_sweeps: 20,
            samples: 10,
            seed: 1,
            include_target: true,
        }
    }
}

fn draw<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Sampler state. Topic-word counts are stored word-major (`w * N + k`).
#[derive(Debug, Clone)]
pub struct GibbsState {
    topics: usize,
    vocab_size: usize,
    pub z: Vec<Vec<u32>>,
    pub doc_topic: Vec<Vec<u32>>,
    pub topic_word: Vec<u32>,
    pub topic_totals: Vec<u64>,
    rng: ChaCha8Rng,
}

impl GibbsState {
    /// Document-level sequential initialization: all tokens of a document
    /// start in one topic, drawn from the collapsed single-topic posterior
    /// given the documents already placed.
    pub fn new(docs: &[Vec<WordId>], topics: usize, vocab_size: usize, beta: f64, seed: u64) -> Self {
        let mut st = Self {
            topics,
            vocab_size,
            z: Vec::with_capacity(docs.len()),
            doc_topic: vec![vec![0; topics]; docs.len()],
            topic_word: vec![0; topics * vocab_size],
            topic_totals: vec![0; topics],
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let vbeta = vocab_size as f64 * beta;
        let mut logw = vec![0.0; topics];
        let mut seen: Vec<(WordId, u32)> = Vec::new();
        for (d, doc) in docs.iter().enumerate() {
            for (k, lw) in logw.iter_mut().enumerate() {
                seen.clear();
                *lw = 0.0;
                for (i, &w) in doc.iter().enumerate() {
                    let prior = match seen.iter_mut().find(|(x, _)| *x == w) {
                        Some((_, c)) => {
                            *c += 1;
                            *c - 1
                        }
                        None => {
                            seen.push((w, 1));
                            0
                        }
                    };
                    let nkw = st.topic_word[w as usize * topics + k] + prior;
                    *lw += ((nkw as f64 + beta) / (st.topic_totals[k] as f64 + i as f64 + vbeta)).ln();
                }
            }
            let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
            let k = draw(&mut st.rng, &weights);
            for &w in doc {
                st.add(d, w, k, 1);
            }
            st.z.push(vec![k as u32; doc.len()]);
        }
        st
    }

    fn conditional(&self, d: usize, w: WordId, alpha: f64, beta: f64, weights: &mut [f64]) {
        let vbeta = self.vocab_size as f64 * beta;
        let row = &self.topic_word[w as usize * self.topics..][..self.topics];
        for k in 0..self.topics {
            weights[k] = (self.doc_topic[d][k] as f64 + alpha) * (row[k] as f64 + beta)
                / (self.topic_totals[k] as f64 + vbeta);
        }
    }

    fn add(&mut self, d: usize, w: WordId, k: usize, sign: i32) {
        let idx = w as usize * self.topics + k;
        if sign > 0 {
            self.doc_topic[d][k] += 1;
            self.topic_word[idx] += 1;
            self.topic_totals[k] += 1;
        } else {
            self.doc_topic[d][k] -= 1;
            self.topic_word[idx] -= 1;
            self.topic_totals[k] -= 1;
        }
    }

    /// One full sweep: every token's topic is removed and resampled.
    pub fn sweep(&mut self, docs: &[Vec<WordId>], alpha: f64, beta: f64) {
        let mut weights = vec![0.0; self.topics];
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = self.z[d][i] as usize;
                self.add(d, w, old, -1);
                self.conditional(d, w, alpha, beta, &mut weights);
                let new = draw(&mut self.rng, &weights);
                self.z[d][i] = new as u32;
                self.add(d, w, new, 1);
            }
        }
    }

    /// True when the count tables are exactly the tallies of `z`.
    pub fn counts_consistent(&self, docs: &[Vec<WordId>]) -> bool {
        let mut dt = vec![vec![0u32; self.topics]; docs.len()];
        let mut tw = vec![0u32; self.topics * self.vocab_size];
        let mut tt = vec![0u64; self.topics];
        for (d, doc) in docs.iter().enumerate() {
            for (&w, &k) in doc.iter().zip(&self.z[d]) {
                dt[d][k as usize] += 1;
                tw[w as usize * self.topics + k as usize] += 1;
                tt[k as usize] += 1;
            }
        }
        dt == self.doc_topic && tw == self.topic_word && tt == self.topic_totals
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    topics: usize,
    alpha: f64,
    beta: f64,
    vocab: Vocabulary,
    topic_word: Vec<u32>,
    topic_totals: Vec<u64>,
}

fn check_config(cfg: &LdaConfig) -> Result<()> {
    if cfg.topics < 2 {
        return Err(Error::InvalidArgument("need at least 2 topics".into()));
    }
    if cfg.sweeps < 1 {
        return Err(Error::InvalidArgument("need at least 1 sweep".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.beta > 0.0) {
        return Err(Error::InvalidArgument("alpha and beta must be positive".into()));
    }
    Ok(())
}

pub fn train_lda(corpus: &SentenceCorpus, vocab: Vocabulary, cfg: &LdaConfig) -> Result<LdaModel> {
    train_lda_observed(corpus, vocab, cfg, |_, _, _| {})
}

/// Like [`train_lda`], calling `observe(sweep, state, docs)` after each sweep.
pub fn train_lda_observed<F>(
    corpus: &SentenceCorpus,
    vocab: Vocabulary,
    cfg: &LdaConfig,
    mut observe: F,
) -> Result<LdaModel>
where
    F: FnMut(usize, &GibbsState, &[Vec<WordId>]),
{
    check_config(cfg)?;
    let docs = corpus.document_tokens();
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut st = GibbsState::new(&docs, cfg.topics, vocab.len(), cfg.beta, cfg.seed);
    for s in 1..=cfg.sweeps {
        st.sweep(&docs, cfg.alpha, cfg.beta);
        observe(s, &st, &docs);
        if s % 100 == 0 {
            log::debug!("lda sweep {s}/{}", cfg.sweeps);
        }
    }
    Ok(LdaModel {
        topics: cfg.topics,
        alpha: cfg.alpha,
        beta: cfg.beta,
        vocab,
        topic_word: st.topic_word,
        topic_totals: st.topic_totals,
    })
}

impl LdaModel {
    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn topic_totals(&self) -> &[u64] {
        &self.topic_totals
    }

    pub fn count(&self, k: usize, w: WordId) -> u32 {
        self.topic_word[w as usize * self.topics + k]
    }

    /// p(w | z = k).
    pub fn phi(&self, k: usize, w: WordId) -> f64 {
        (self.count(k, w) as f64 + self.beta)
            / (self.topic_totals[k] as f64 + self.vocab.len() as f64 * self.beta)
    }

    /// Fold-in topic distribution of `history` with topic-word counts fixed.
    /// Out-of-vocabulary ids are dropped with a warning.
    pub fn infer_theta(&self, history: &[WordId], cfg: &InferenceConfig) -> Vec<f64> {
        let n = self.topics;
        let tokens: Vec<WordId> = history
            .iter()
            .copied()
            .filter(|&w| {
                let ok = (w as usize) < self.vocab.len();
                if !ok {
                    log::warn!("dropping out-of-vocabulary id {w} from topic history");
                }
                ok
            })
            .collect();
        let denom = tokens.len() as f64 + n as f64 * self.alpha;
        if tokens.is_empty() {
            return vec![1.0 / n as f64; n];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut counts = vec![0u32; n];
        let mut z = Vec::with_capacity(tokens.len());
        let mut weights = vec![0.0; n];
        for &w in &tokens {
            for k in 0..n {
                weights[k] = (counts[k] as f64 + self.alpha) * self.phi(k, w);
            }
            let k = draw(&mut rng, &weights);
            counts[k] += 1;
            z.push(k);
        }
        let sweeps = cfg.fold_in_sweeps.max(1);
        let samples = cfg.samples.clamp(1, sweeps);
        let mut theta = vec![0.0; n];
        for s in 0..sweeps {
            for (i, &w) in tokens.iter().enumerate() {
                counts[z[i]] -= 1;
                for k in 0..n {
                    weights[k] = (counts[k] as f64 + self.alpha) * self.phi(k, w);
                }
                z[i] = draw(&mut rng, &weights);
                counts[z[i]] += 1;
            }
            if s >= sweeps - samples {
                for k in 0..n {
                    theta[k] += (counts[k] as f64 + self.alpha) / denom;
                }
            }
        }
        theta.iter_mut().for_each(|t| *t /= samples as f64);
        theta
    }

    /// Σ_k p(w | z_k) θ_k.
    pub fn mixture_prob(&self, w: WordId, theta: &[f64]) -> f64 {
        theta.iter().enumerate().map(|(k, t)| t * self.phi(k, w)).sum()
    }

    /// Probability of `w` under the topic mixture inferred from `history`
    /// (plus `w` itself when `include_target` is set).
    pub fn topic_word_prob(&self, w: WordId, history: &[WordId], cfg: &InferenceConfig) -> Result<f64> {
        if w as usize >= self.vocab.len() {
            return Err(Error::OutOfVocabulary(format!("id {w}")));
        }
        let theta = if cfg.include_target {
            let mut doc = history.to_vec();
            doc.push(w);
            self.infer_theta(&doc, cfg)
        } else {
            self.infer_theta(history, cfg)
        };
        Ok(self.mixture_prob(w, &theta))
    }

    pub fn word_prob<S: AsRef<str>>(&self, history: &[S], target: &str, cfg: &InferenceConfig) -> Result<f64> {
        let w = self
            .vocab
            .id(target)
            .ok_or_else(|| Error::OutOfVocabulary(target.to_string()))?;
        let ids: Vec<WordId> = history
            .iter()
            .map(|h| self.vocab.id(h.as_ref()).unwrap_or(WordId::MAX))
            .collect();
        self.topic_word_prob(w, &ids, cfg)
    }

    /// `topic\trank\tword\tprob`, `k` words per topic.
    pub fn write_top_words<W: Write>(&self, mut out: W, k: usize) -> Result<()> {
        writeln!(out, "topic\trank\tword\tprob")?;
        for z in 0..self.topics {
            let mut ws: Vec<WordId> = (0..self.vocab.len() as WordId).collect();
            ws.sort_by(|&a, &b| self.count(z, b).cmp(&self.count(z, a)).then(a.cmp(&b)));
            for (rank, &w) in ws.iter().take(k).enumerate() {
                writeln!(out, "{z}\t{}\t{}\t{:.6e}", rank + 1, self.vocab.word(w), self.phi(z, w))?;
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        write_magic(&mut out, MAGIC)?;
        write_u32(&mut out, self.topics as u32)?;
        write_f64(&mut out, self.alpha)?;
        write_f64(&mut out, self.beta)?;
        write_vocab(&mut out, &self.vocab)?;
        for &c in &self.topic_word {
            write_u32(&mut out, c)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        expect_magic(&mut input, MAGIC)?;
        let topics = read_u32(&mut input)? as usize;
        let alpha = read_f64(&mut input)?;
        let beta = read_f64(&mut input)?;
        if topics < 2 || !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::BadModelFile("invalid LDA header".into()));
        }
        let vocab = read_vocab(&mut input)?;
        let topic_word: Vec<u32> = (0..topics * vocab.len())
            .map(|_| read_u32(&mut input))
            .collect::<Result<_>>()?;
        let mut topic_totals = vec![0u64; topics];
        for (i, &c) in topic_word.iter().enumerate() {
            topic_totals[i % topics] += c as u64;
        }
        Ok(Self {
            topics,
            alpha,
            beta,
            vocab,
            topic_word,
            topic_totals,
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
}
