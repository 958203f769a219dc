//! Elman recurrent language model with a class-factorized softmax output.
//!
//! Events are the V words plus EOS (id V). The initial state predicts the
//! first word; the state after the last word predicts EOS.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::*;
use crate::corpus::{SentenceCorpus, Vocabulary, WordId};
use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 5] = b"LPRN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// Every unit at 0.5, the sigmoid of a zero input.
    Half,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub bptt_depth: usize,
    pub temperature: f64,
    /// Number of output classes; `None` picks about sqrt(V + 1), `Some(1)`
    /// gives the full softmax.
    pub classes: Option<usize>,
    pub initial_state: InitialState,
    /// Relative loss improvement below which the learning rate is halved.
    pub min_improvement: f64,
    pub seed: u64,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            hidden: 400,
            epochs: 10,
            learning_rate: 0.1,
            bptt_depth: 1,
            temperature: 0.6,
            classes: None,
            initial_state: InitialState::Half,
            min_improvement: 1e-3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnState {
    /// Hidden activations; they are also the context for the next step.
    pub hidden: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    hidden: usize,
    vocab: Vocabulary,
    temperature: f64,
    initial: InitialState,
    /// V x H input weights.
    emb: Vec<f64>,
    /// H x H recurrent weights, row-major (`rec[i * H + j]` maps context j to unit i).
    rec: Vec<f64>,
    /// C x H class weights.
    class_w: Vec<f64>,
    /// (V + 1) x H event weights.
    word_w: Vec<f64>,
    class_of: Vec<u32>,
    members: Vec<Vec<u32>>,
}

/// Gradient of the sentence loss. Input and event rows are kept sparse.
#[derive(Debug, Clone)]
pub struct RnnGradient {
    pub emb: Vec<(u32, Vec<f64>)>,
    pub rec: Vec<f64>,
    pub class_w: Vec<f64>,
    pub word_w: Vec<(u32, Vec<f64>)>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// In-place softmax of `logits`.
fn softmax(logits: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - m).exp();
        s += *l;
    }
    for l in logits.iter_mut() {
        *l /= s;
    }
}

/// Frequency-banded classes: events sorted by count, cut into bands of
/// roughly equal cumulative mass. Empty bands are dropped.
pub fn frequency_classes(counts: &[u64], classes: usize) -> (Vec<u32>, Vec<Vec<u32>>) {
    let classes = classes.clamp(1, counts.len());
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let total: f64 = counts.iter().map(|&c| c as f64).sum::<f64>().max(1.0);
    let mut band = vec![0usize; counts.len()];
    let mut cum = 0.0;
    for &e in &order {
        band[e] = ((cum / total * classes as f64) as usize).min(classes - 1);
        cum += counts[e] as f64;
    }
    let mut remap = vec![u32::MAX; classes];
    let mut members: Vec<Vec<u32>> = Vec::new();
    let mut class_of = vec![0u32; counts.len()];
    for &e in &order {
        let b = band[e];
        if remap[b] == u32::MAX {
            remap[b] = members.len() as u32;
            members.push(Vec::new());
        }
        class_of[e] = remap[b];
        members[remap[b] as usize].push(e as u32);
    }
    for m in &mut members {
        m.sort_unstable();
    }
    (class_of, members)
}

impl RnnModel {
    /// Random model with weights uniform in (-0.1, 0.1).
    pub fn new(vocab: Vocabulary, event_counts: &[u64], cfg: &RnnConfig) -> Result<Self> {
        let v = vocab.len();
        if event_counts.len() != v + 1 {
            return Err(Error::InvalidArgument("need one count per word plus EOS".into()));
        }
        if cfg.hidden == 0 || !(cfg.temperature > 0.0) {
            return Err(Error::InvalidArgument("hidden size and temperature must be positive".into()));
        }
        let c = cfg
            .classes
            .unwrap_or_else(|| ((v + 1) as f64).sqrt().round() as usize);
        let (class_of, members) = frequency_classes(event_counts, c);
        let h = cfg.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut init = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-0.1..0.1)).collect() };
        Ok(Self {
            hidden: h,
            temperature: cfg.temperature,
            initial: cfg.initial_state,
            emb: init(v * h),
            rec: init(h * h),
            class_w: init(members.len() * h),
            word_w: init((v + 1) * h),
            vocab,
            class_of,
            members,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn class_count(&self) -> usize {
        self.members.len()
    }

    pub fn eos(&self) -> WordId {
        self.vocab.len() as WordId
    }

    pub fn event_count(&self) -> usize {
        self.vocab.len() + 1
    }

    pub fn initial_state(&self) -> RnnState {
        let fill = match self.initial {
            InitialState::Half => 0.5,
            InitialState::Zero => 0.0,
        };
        RnnState {
            hidden: vec![fill; self.hidden],
        }
    }

    fn next_hidden(&self, prev: &[f64], w: WordId) -> Vec<f64> {
        let h = self.hidden;
        let e = &self.emb[w as usize * h..][..h];
        (0..h)
            .map(|i| sigmoid(e[i] + dot(&self.rec[i * h..][..h], prev)))
            .collect()
    }

    /// Advances the state by input word `w` and returns the distribution
    /// over the next event.
    pub fn step(&self, state: &RnnState, w: WordId) -> Result<(RnnState, Vec<f64>)> {
        if w as usize >= self.vocab.len() {
            return Err(Error::OutOfVocabulary(format!("id {w}")));
        }
        let next = RnnState {
            hidden: self.next_hidden(&state.hidden, w),
        };
        let dist = self.distribution(&next);
        Ok((next, dist))
    }

    /// Advances the state without computing the output distribution.
    pub fn advance(&self, state: &RnnState, w: WordId) -> Result<RnnState> {
        if w as usize >= self.vocab.len() {
            return Err(Error::OutOfVocabulary(format!("id {w}")));
        }
        Ok(RnnState {
            hidden: self.next_hidden(&state.hidden, w),
        })
    }

    fn class_probs(&self, h: &[f64]) -> Vec<f64> {
        let hs = self.hidden;
        let mut logits: Vec<f64> = (0..self.members.len())
            .map(|c| dot(&self.class_w[c * hs..][..hs], h) / self.temperature)
            .collect();
        softmax(&mut logits);
        logits
    }

    fn member_probs(&self, class: usize, h: &[f64]) -> Vec<f64> {
        let hs = self.hidden;
        let mut logits: Vec<f64> = self.members[class]
            .iter()
            .map(|&e| dot(&self.word_w[e as usize * hs..][..hs], h) / self.temperature)
            .collect();
        softmax(&mut logits);
        logits
    }

    /// Full output distribution over V + 1 events.
    pub fn distribution(&self, state: &RnnState) -> Vec<f64> {
        let pc = self.class_probs(&state.hidden);
        let mut out = vec![0.0; self.event_count()];
        for (c, members) in self.members.iter().enumerate() {
            for (&e, p) in members.iter().zip(self.member_probs(c, &state.hidden)) {
                out[e as usize] = pc[c] * p;
            }
        }
        out
    }

    /// Probability of event `e` in the output of `state`.
    pub fn event_prob(&self, state: &RnnState, e: WordId) -> f64 {
        let c = self.class_of[e as usize] as usize;
        let pc = self.class_probs(&state.hidden)[c];
        let pos = self.members[c].iter().position(|&m| m == e).unwrap();
        pc * self.member_probs(c, &state.hidden)[pos]
    }

    fn check_tokens(&self, tokens: &[WordId]) -> Result<()> {
        if let Some(position) = tokens.iter().position(|&t| t as usize >= self.vocab.len()) {
            return Err(Error::OutOfVocabularyAt {
                position,
                token: format!("id {}", tokens[position]),
            });
        }
        Ok(())
    }

    fn run(&self, prefix: &[WordId]) -> Result<RnnState> {
        self.check_tokens(prefix)?;
        let mut st = self.initial_state();
        for &w in prefix {
            st.hidden = self.next_hidden(&st.hidden, w);
        }
        Ok(st)
    }

    /// log10 p(w | prefix); `w` may be EOS.
    pub fn word_logprob(&self, prefix: &[WordId], w: WordId) -> Result<f64> {
        if w as usize > self.vocab.len() {
            return Err(Error::OutOfVocabularyAt {
                position: prefix.len(),
                token: format!("id {w}"),
            });
        }
        let st = self.run(prefix)?;
        Ok(self.event_prob(&st, w).log10())
    }

    /// log10 probability of each token given its prefix, in one pass.
    pub fn score_sentence(&self, tokens: &[WordId]) -> Result<Vec<f64>> {
        self.check_tokens(tokens)?;
        let mut st = self.initial_state();
        let mut out = Vec::with_capacity(tokens.len());
        for &w in tokens {
            out.push(self.event_prob(&st, w).log10());
            st.hidden = self.next_hidden(&st.hidden, w);
        }
        Ok(out)
    }

    /// Probability of `target` after the surface-form `history`.
    pub fn word_prob<S: AsRef<str>>(&self, history: &[S], target: &str) -> Result<f64> {
        let mut ids = Vec::with_capacity(history.len());
        for (position, h) in history.iter().enumerate() {
            ids.push(self.vocab.id(h.as_ref()).ok_or_else(|| Error::OutOfVocabularyAt {
                position,
                token: h.as_ref().to_string(),
            })?);
        }
        let w = self.vocab.id(target).ok_or_else(|| Error::OutOfVocabularyAt {
            position: history.len(),
            token: target.to_string(),
        })?;
        Ok(10f64.powf(self.word_logprob(&ids, w)?))
    }

    /// Natural-log loss of a sentence (its words, then EOS) and its gradient
    /// with backpropagation truncated to `depth` steps per output.
    pub fn sentence_gradient(&self, sentence: &[WordId], depth: usize) -> Result<(f64, RnnGradient)> {
        self.check_tokens(sentence)?;
        let h = self.hidden;
        let t = self.temperature;
        let mut states = Vec::with_capacity(sentence.len() + 1);
        states.push(self.initial_state().hidden);
        for &w in sentence {
            let next = self.next_hidden(states.last().unwrap(), w);
            states.push(next);
        }
        let mut grad = RnnGradient {
            emb: Vec::new(),
            rec: vec![0.0; h * h],
            class_w: vec![0.0; self.class_w.len()],
            word_w: Vec::new(),
        };
        let mut emb_rows: Vec<(u32, Vec<f64>)> = Vec::new();
        let mut word_rows: Vec<(u32, Vec<f64>)> = Vec::new();
        fn row<'a>(rows: &'a mut Vec<(u32, Vec<f64>)>, id: u32, h: usize) -> &'a mut Vec<f64> {
            let i = match rows.iter().position(|(r, _)| *r == id) {
                Some(i) => i,
                None => {
                    rows.push((id, vec![0.0; h]));
                    rows.len() - 1
                }
            };
            &mut rows[i].1
        }
        let mut loss = 0.0;
        for (pos, hs) in states.iter().enumerate() {
            let target = sentence.get(pos).copied().unwrap_or(self.eos());
            let c = self.class_of[target as usize] as usize;
            let pc = self.class_probs(hs);
            let pm = self.member_probs(c, hs);
            let k = self.members[c].iter().position(|&m| m == target).unwrap();
            loss -= (pc[c] * pm[k]).ln();

            let mut dh = vec![0.0; h];
            for (cc, &p) in pc.iter().enumerate() {
                let g = (p - if cc == c { 1.0 } else { 0.0 }) / t;
                axpy(&mut grad.class_w[cc * h..][..h], g, hs);
                axpy(&mut dh, g, &self.class_w[cc * h..][..h]);
            }
            for (j, &e) in self.members[c].iter().enumerate() {
                let g = (pm[j] - if j == k { 1.0 } else { 0.0 }) / t;
                axpy(row(&mut word_rows, e, h), g, hs);
                axpy(&mut dh, g, &self.word_w[e as usize * h..][..h]);
            }

            let mut s = pos;
            for _ in 0..depth {
                if s == 0 {
                    break;
                }
                let cur = &states[s];
                let prev = &states[s - 1];
                let delta: Vec<f64> = (0..h).map(|i| dh[i] * cur[i] * (1.0 - cur[i])).collect();
                axpy(row(&mut emb_rows, sentence[s - 1], h), 1.0, &delta);
                for i in 0..h {
                    axpy(&mut grad.rec[i * h..][..h], delta[i], prev);
                }
                dh = vec![0.0; h];
                for i in 0..h {
                    axpy(&mut dh, delta[i], &self.rec[i * h..][..h]);
                }
                s -= 1;
            }
        }
        emb_rows.sort_by_key(|r| r.0);
        word_rows.sort_by_key(|r| r.0);
        grad.emb = emb_rows;
        grad.word_w = word_rows;
        Ok((loss, grad))
    }

    pub fn apply(&mut self, grad: &RnnGradient, lr: f64) {
        let h = self.hidden;
        for (id, g) in &grad.emb {
            axpy(&mut self.emb[*id as usize * h..][..h], -lr, g);
        }
        for (id, g) in &grad.word_w {
            axpy(&mut self.word_w[*id as usize * h..][..h], -lr, g);
        }
        axpy(&mut self.rec, -lr, &grad.rec);
        axpy(&mut self.class_w, -lr, &grad.class_w);
    }

    /// All weights flattened as input, recurrent, class, event.
    pub fn parameters(&self) -> Vec<f64> {
        [&self.emb[..], &self.rec, &self.class_w, &self.word_w].concat()
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        let sizes = [self.emb.len(), self.rec.len(), self.class_w.len(), self.word_w.len()];
        if p.len() != sizes.iter().sum::<usize>() {
            return Err(Error::InvalidArgument("parameter vector has wrong length".into()));
        }
        let mut rest = p;
        for (dst, n) in [&mut self.emb, &mut self.rec, &mut self.class_w, &mut self.word_w]
            .into_iter()
            .zip(sizes)
        {
            dst.copy_from_slice(&rest[..n]);
            rest = &rest[n..];
        }
        Ok(())
    }

    fn weights_finite(&self) -> bool {
        self.parameters().iter().all(|x| x.is_finite())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        write_magic(&mut out, MAGIC)?;
        write_u32(&mut out, self.hidden as u32)?;
        write_f64(&mut out, self.temperature)?;
        write_u32(&mut out, matches!(self.initial, InitialState::Zero) as u32)?;
        write_vocab(&mut out, &self.vocab)?;
        write_u32(&mut out, self.members.len() as u32)?;
        for &c in &self.class_of {
            write_u32(&mut out, c)?;
        }
        for w in [&self.emb, &self.rec, &self.class_w, &self.word_w] {
            write_f64s(&mut out, w)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        expect_magic(&mut input, MAGIC)?;
        let hidden = read_u32(&mut input)? as usize;
        let temperature = read_f64(&mut input)?;
        let initial = match read_u32(&mut input)? {
            0 => InitialState::Half,
            1 => InitialState::Zero,
            x => return Err(Error::BadModelFile(format!("unknown initial state {x}"))),
        };
        let vocab = read_vocab(&mut input)?;
        let classes = read_u32(&mut input)? as usize;
        let mut class_of = Vec::with_capacity(vocab.len() + 1);
        let mut members = vec![Vec::new(); classes];
        for e in 0..=vocab.len() {
            let c = read_u32(&mut input)?;
            if c as usize >= classes {
                return Err(Error::BadModelFile("class id out of range".into()));
            }
            class_of.push(c);
            members[c as usize].push(e as u32);
        }
        let emb = read_f64s(&mut input)?;
        let rec = read_f64s(&mut input)?;
        let class_w = read_f64s(&mut input)?;
        let word_w = read_f64s(&mut input)?;
        if emb.len() != vocab.len() * hidden
            || rec.len() != hidden * hidden
            || class_w.len() != classes * hidden
            || word_w.len() != (vocab.len() + 1) * hidden
            || members.iter().any(Vec::is_empty)
        {
            return Err(Error::BadModelFile("weight shapes do not match header".into()));
        }
        Ok(Self {
            hidden,
            vocab,
            temperature,
            initial,
            emb,
            rec,
            class_w,
            word_w,
            class_of,
            members,
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

/// Per-epoch record of training.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean natural-log loss per predicted event.
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

/// Mean per-event natural-log loss of a corpus.
pub fn corpus_loss(model: &RnnModel, corpus: &SentenceCorpus) -> Result<f64> {
    let mut total = 0.0;
    let mut events = 0usize;
    for s in corpus.sentences() {
        let mut scores = model.score_sentence(s)?;
        let st = model.run(s)?;
        scores.push(model.event_prob(&st, model.eos()).log10());
        total -= scores.iter().sum::<f64>() * std::f64::consts::LN_10;
        events += scores.len();
    }
    Ok(total / events as f64)
}

/// Event counts (words plus EOS) of a corpus, at least 1 each.
pub fn event_counts(corpus: &SentenceCorpus, vocab_size: usize) -> Vec<u64> {
    let mut counts = vec![1u64; vocab_size + 1];
    for s in corpus.sentences() {
        for &w in s {
            counts[w as usize] += 1;
        }
        counts[vocab_size] += 1;
    }
    counts
}

/// SGD with one update per sentence. The learning rate is halved after an
/// epoch whose loss (validation if given, else training) improved by less
/// than `min_improvement` relative to the previous epoch.
pub fn train_rnn(
    corpus: &SentenceCorpus,
    vocab: Vocabulary,
    cfg: &RnnConfig,
    validation: Option<&SentenceCorpus>,
) -> Result<(RnnModel, Vec<EpochLog>)> {
    if cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("epochs and learning rate must be positive".into()));
    }
    let counts = event_counts(corpus, vocab.len());
    let mut model = RnnModel::new(vocab, &counts, cfg)?;
    let mut lr = cfg.learning_rate;
    let mut prev: Option<f64> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        let mut events = 0usize;
        for s in corpus.sentences() {
            let (loss, grad) = model.sentence_gradient(s, cfg.bptt_depth)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss in epoch {epoch} at learning rate {lr}"
                )));
            }
            total += loss;
            events += s.len() + 1;
            model.apply(&grad, lr);
        }
        if !model.weights_finite() {
            return Err(Error::Diverged(format!(
                "non-finite weights after epoch {epoch} at learning rate {lr}"
            )));
        }
        let train_loss = total / events as f64;
        let validation_loss = validation.map(|v| corpus_loss(&model, v)).transpose()?;
        log::info!("rnn epoch {epoch}: lr {lr} loss {train_loss:.5}");
        log.push(EpochLog {
            epoch,
            learning_rate: lr,
            train_loss,
            validation_loss,
        });
        let watched = validation_loss.unwrap_or(train_loss);
        if let Some(p) = prev {
            if watched > p * (1.0 - cfg.min_improvement) {
                lr *= 0.5;
            }
        }
        prev = Some(watched);
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, parse_corpus_text, TokenizerRules};

    fn tiny(classes: Option<usize>) -> RnnModel {
        let t = parse_corpus_text("a b c d e\na a b", &TokenizerRules::default());
        let v = build_vocabulary(&t.sentences, 1).unwrap();
        let cfg = RnnConfig {
            hidden: 3,
            classes,
            ..RnnConfig::default()
        };
        RnnModel::new(v, &[5, 4, 3, 2, 1, 2], &cfg).unwrap()
    }

    #[test]
    fn classes_cover_all_events() {
        let (class_of, members) = frequency_classes(&[100, 50, 25, 10, 5, 1], 3);
        let mut seen: Vec<u32> = members.concat();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(class_of[0], 0);
        assert!(members.len() <= 3);
        let (_, one) = frequency_classes(&[3, 2, 1], 1);
        assert_eq!(one, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn distributions_normalize() {
        for classes in [Some(1), Some(2), None] {
            let m = tiny(classes);
            let mut st = m.initial_state();
            assert!(st.hidden.iter().all(|&x| x == 0.5));
            for w in [0, 3, 1] {
                let (next, dist) = m.step(&st, w).unwrap();
                assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(next.hidden.iter().all(|&x| x > 0.0 && x < 1.0));
                st = next;
            }
        }
    }

    #[test]
    fn huge_temperature_is_uniform() {
        let mut m = tiny(Some(1));
        m.temperature = 1e12;
        let (_, dist) = m.step(&m.initial_state(), 0).unwrap();
        for p in dist {
            assert!((p - 1.0 / 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn oov_names_position() {
        let m = tiny(None);
        assert!(m.step(&m.initial_state(), 9).is_err());
        match m.word_logprob(&[0, 1, 42], 0) {
            Err(Error::OutOfVocabularyAt { position, .. }) => assert_eq!(position, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_prefix_uses_initial_distribution() {
        let m = tiny(Some(2));
        let dist = m.distribution(&m.initial_state());
        let lp = m.word_logprob(&[], 2).unwrap();
        assert!((10f64.powf(lp) - dist[2]).abs() < 1e-15);
    }

    #[test]
    fn model_file_round_trip() {
        let m = tiny(Some(2));
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"LPRN1");
        assert_eq!(RnnModel::read(&buf[..]).unwrap(), m);
    }
}
