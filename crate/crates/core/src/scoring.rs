//! Cloze transform, per-token model scores and present/last/next alignment.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{tokenize, TokenizerRules, Vocabulary};
use crate::error::{Error, Result};
use crate::ngram::KnModel;
use crate::rnn::RnnModel;
use crate::topics::{InferenceConfig, LdaModel};
use crate::tsv::{fmt_num, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Ccp,
    Ngram,
    Topic,
    Rnn,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Ccp, Source::Ngram, Source::Topic, Source::Rnn];
    pub const MODELS: [Source; 3] = [Source::Ngram, Source::Topic, Source::Rnn];

    pub fn name(self) -> &'static str {
        match self {
            Source::Ccp => "ccp",
            Source::Ngram => "ngram",
            Source::Topic => "topic",
            Source::Rnn => "rnn",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    Present,
    Last,
    Next,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::Present, Position::Last, Position::Next];

    pub fn name(self) -> &'static str {
        match self {
            Position::Present => "present",
            Position::Last => "last",
            Position::Next => "next",
        }
    }
}

/// `source_position` column name of a transformed score.
pub fn score_column(s: Source, p: Position) -> String {
    format!("{}_{}", s.name(), p.name())
}

/// `raw_source_position` column name of a raw probability.
pub fn raw_column(s: Source, p: Position) -> String {
    format!("raw_{}_{}", s.name(), p.name())
}

pub fn length_column(p: Position) -> String {
    format!("length_{}", p.name())
}

pub fn frequency_column(p: Position) -> String {
    format!("freq_{}", p.name())
}

/// 0.5 ln(ccp / (1 - ccp)) with 0 and 1 replaced by 1/(2n) and 1 - 1/(2n).
pub fn logit_ccp(ccp: f64, n_protocols: u32) -> Result<f64> {
    if n_protocols < 1 {
        return Err(Error::InvalidArgument("n_protocols must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&ccp) {
        return Err(Error::InvalidArgument(format!("ccp {ccp} outside [0, 1]")));
    }
    // evaluated on the lower half so that x and 1 - x give exact negatives
    let (q, sign) = if ccp > 0.5 { (1.0 - ccp, -1.0) } else { (ccp, 1.0) };
    let q = if q == 0.0 { 1.0 / (2.0 * n_protocols as f64) } else { q };
    Ok(sign * 0.5 * (q / (1.0 - q)).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusToken {
    pub sentence_id: u32,
    /// 1-based.
    pub word_index: u32,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClozeNorm {
    pub sentence_id: u32,
    pub word_index: u32,
    pub ccp: f64,
    pub n_protocols: u32,
}

/// Number of letters and digits in a token.
pub fn word_length(token: &str) -> usize {
    token.chars().filter(|c| c.is_alphanumeric()).count()
}

/// Stimulus tokens grouped by sentence, ordered by id and word index.
/// Word indices must run 1..=L without gaps.
pub fn group_sentences(stimuli: &[StimulusToken]) -> Result<Vec<(u32, Vec<&StimulusToken>)>> {
    let mut by: HashMap<u32, Vec<&StimulusToken>> = HashMap::new();
    for t in stimuli {
        by.entry(t.sentence_id).or_default().push(t);
    }
    let mut out: Vec<(u32, Vec<&StimulusToken>)> = by.into_iter().collect();
    out.sort_by_key(|(id, _)| *id);
    for (id, toks) in &mut out {
        toks.sort_by_key(|t| t.word_index);
        for (i, t) in toks.iter().enumerate() {
            if t.word_index as usize != i + 1 {
                return Err(Error::InvalidArgument(format!(
                    "sentence {id}: word indices are not 1..L (found {} at position {})",
                    t.word_index,
                    i + 1
                )));
            }
        }
    }
    Ok(out)
}

/// Trained models used for scoring. Absent models leave their scores empty.
#[derive(Default)]
pub struct Models<'a> {
    pub ngram: Option<&'a KnModel>,
    pub topic: Option<(&'a LdaModel, InferenceConfig)>,
    pub rnn: Option<&'a RnnModel>,
}

/// Raw per-token values; `None` marks OOV or missing data.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScore {
    pub sentence_id: u32,
    pub word_index: u32,
    pub token: String,
    pub length: usize,
    pub frequency_class: Option<u32>,
    pub ccp: Option<f64>,
    pub n_protocols: Option<u32>,
    pub ngram: Option<f64>,
    pub topic: Option<f64>,
    pub rnn: Option<f64>,
}

impl RawScore {
    pub fn get(&self, s: Source) -> Option<f64> {
        match s {
            Source::Ccp => self.ccp,
            Source::Ngram => self.ngram,
            Source::Topic => self.topic,
            Source::Rnn => self.rnn,
        }
    }
}

/// Tokenizer-normalized form of a stimulus token (empty if nothing is left).
pub fn normalize_token(token: &str, rules: &TokenizerRules) -> String {
    tokenize(token, rules).concat()
}

fn score_sentence(
    toks: &[&StimulusToken],
    models: &Models,
    frequency: &Vocabulary,
    norms: &HashMap<(u32, u32), &ClozeNorm>,
    rules: &TokenizerRules,
) -> Vec<RawScore> {
    let words: Vec<String> = toks.iter().map(|t| normalize_token(&t.token, rules)).collect();
    let ngram: Vec<Option<f64>> = match models.ngram {
        Some(m) => m
            .score_sentence(&m.encode_words(&words))
            .into_iter()
            .map(|lp| lp.map(|l| 10f64.powf(l)))
            .collect(),
        None => vec![None; words.len()],
    };
    let topic: Vec<Option<f64>> = match &models.topic {
        Some((m, cfg)) => (0..words.len())
            .map(|i| m.word_prob(&words[..i], &words[i], cfg).ok())
            .collect(),
        None => vec![None; words.len()],
    };
    let rnn: Vec<Option<f64>> = match models.rnn {
        Some(m) => {
            // an unknown word leaves every later prefix unscorable
            let mut out = Vec::with_capacity(words.len());
            let mut st = m.initial_state();
            let mut broken = false;
            for w in &words {
                match m.vocab().id(w) {
                    Some(id) if !broken => {
                        out.push(Some(m.event_prob(&st, id)));
                        st = m.advance(&st, id).expect("in-vocabulary step");
                    }
                    _ => {
                        broken = true;
                        out.push(None);
                    }
                }
            }
            out
        }
        None => vec![None; words.len()],
    };
    toks.iter()
        .enumerate()
        .map(|(i, t)| {
            let norm = norms.get(&(t.sentence_id, t.word_index));
            RawScore {
                sentence_id: t.sentence_id,
                word_index: t.word_index,
                token: t.token.clone(),
                length: word_length(&t.token),
                frequency_class: frequency.frequency_class(&words[i]).ok(),
                ccp: norm.map(|n| n.ccp),
                n_protocols: norm.map(|n| n.n_protocols),
                ngram: ngram[i],
                topic: topic[i],
                rnn: rnn[i],
            }
        })
        .collect()
}

/// Raw probabilities from every model plus the raw cloze values.
pub fn score_stimuli(
    stimuli: &[StimulusToken],
    models: &Models,
    norms: &[ClozeNorm],
    frequency: &Vocabulary,
    rules: &TokenizerRules,
) -> Result<Vec<RawScore>> {
    let sentences = group_sentences(stimuli)?;
    let norm_map: HashMap<(u32, u32), &ClozeNorm> =
        norms.iter().map(|n| ((n.sentence_id, n.word_index), n)).collect();
    let scored: Vec<Vec<RawScore>> = sentences
        .par_iter()
        .map(|(_, toks)| score_sentence(toks, models, frequency, &norm_map, rules))
        .collect();
    let out: Vec<RawScore> = scored.into_iter().flatten().collect();
    let missing = out.iter().filter(|r| r.ccp.is_none()).count();
    if missing > 0 {
        log::warn!("{missing} stimulus tokens have no cloze norm");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorRow {
    pub sentence_id: u32,
    pub word_index: u32,
    pub token: String,
    /// Transformed scores by source and position (logit for CCP, log10 otherwise).
    pub scores: [[f64; 3]; 4],
    /// Raw probabilities by source and position.
    pub raw: [[f64; 3]; 4],
    pub length: [f64; 3],
    pub frequency: [f64; 3],
    pub complete: bool,
}

impl PredictorRow {
    pub fn score(&self, s: Source, p: Position) -> f64 {
        self.scores[s.index()][p as usize]
    }

    pub fn raw(&self, s: Source, p: Position) -> f64 {
        self.raw[s.index()][p as usize]
    }

    /// Value of a named column (see the `*_column` helpers).
    pub fn column(&self, name: &str) -> Option<f64> {
        for p in Position::ALL {
            if name == length_column(p) {
                return Some(self.length[p as usize]);
            }
            if name == frequency_column(p) {
                return Some(self.frequency[p as usize]);
            }
            for s in Source::ALL {
                if name == score_column(s, p) {
                    return Some(self.score(s, p));
                }
                if name == raw_column(s, p) {
                    return Some(self.raw(s, p));
                }
            }
        }
        None
    }
}

fn transformed(r: &RawScore, s: Source) -> Option<f64> {
    match s {
        Source::Ccp => logit_ccp(r.ccp?, r.n_protocols?).ok(),
        _ => r.get(s).filter(|p| *p > 0.0).map(f64::log10),
    }
}

/// Rows for word indices 2..L-1 of each sentence. A row is incomplete if any
/// of its three positions lacks a score or frequency class.
pub fn align_predictors(raw: &[RawScore]) -> Vec<PredictorRow> {
    let mut by: HashMap<u32, Vec<&RawScore>> = HashMap::new();
    for r in raw {
        by.entry(r.sentence_id).or_default().push(r);
    }
    let mut ids: Vec<u32> = by.keys().copied().collect();
    ids.sort_unstable();
    let mut rows = Vec::new();
    for id in ids {
        let s = by.get_mut(&id).unwrap();
        s.sort_by_key(|r| r.word_index);
        if s.len() < 3 {
            log::warn!("sentence {id} has {} words; no predictor rows", s.len());
            continue;
        }
        for i in 1..s.len() - 1 {
            let at = [s[i], s[i - 1], s[i + 1]];
            let mut row = PredictorRow {
                sentence_id: id,
                word_index: s[i].word_index,
                token: s[i].token.clone(),
                scores: [[f64::NAN; 3]; 4],
                raw: [[f64::NAN; 3]; 4],
                length: [0.0; 3],
                frequency: [f64::NAN; 3],
                complete: true,
            };
            for (p, r) in at.iter().enumerate() {
                row.length[p] = r.length as f64;
                match r.frequency_class {
                    Some(c) => row.frequency[p] = c as f64,
                    None => row.complete = false,
                }
                for src in Source::ALL {
                    match (r.get(src), transformed(r, src)) {
                        (Some(raw), Some(t)) => {
                            row.raw[src.index()][p] = raw;
                            row.scores[src.index()][p] = t;
                        }
                        _ => row.complete = false,
                    }
                }
            }
            rows.push(row);
        }
    }
    rows
}

pub fn read_stimuli(path: &Path) -> Result<Vec<StimulusToken>> {
    let t = Table::open(path)?;
    let (s, w, k) = (t.column("sentence_id")?, t.column("word_index")?, t.column("token")?);
    (0..t.len())
        .map(|r| {
            let word_index: u32 = t.get(r, w)?;
            if word_index == 0 {
                return Err(t.error(r, "word_index is 1-based".into()));
            }
            Ok(StimulusToken {
                sentence_id: t.get(r, s)?,
                word_index,
                token: t.str(r, k)?.to_string(),
            })
        })
        .collect()
}

pub fn read_norms(path: &Path) -> Result<Vec<ClozeNorm>> {
    let t = Table::open(path)?;
    let cols = [
        t.column("sentence_id")?,
        t.column("word_index")?,
        t.column("ccp")?,
        t.column("n_protocols")?,
    ];
    (0..t.len())
        .map(|r| {
            let n = ClozeNorm {
                sentence_id: t.get(r, cols[0])?,
                word_index: t.get(r, cols[1])?,
                ccp: t.get(r, cols[2])?,
                n_protocols: t.get(r, cols[3])?,
            };
            if !(0.0..=1.0).contains(&n.ccp) || n.n_protocols < 1 {
                return Err(t.error(r, format!("invalid norm ccp={} n={}", n.ccp, n.n_protocols)));
            }
            Ok(n)
        })
        .collect()
}

pub fn write_stimuli<W: Write>(mut out: W, stimuli: &[StimulusToken]) -> Result<()> {
    writeln!(out, "sentence_id\tword_index\ttoken")?;
    for t in stimuli {
        writeln!(out, "{}\t{}\t{}", t.sentence_id, t.word_index, t.token)?;
    }
    Ok(())
}

pub fn write_norms<W: Write>(mut out: W, norms: &[ClozeNorm]) -> Result<()> {
    writeln!(out, "sentence_id\tword_index\tccp\tn_protocols")?;
    for n in norms {
        writeln!(out, "{}\t{}\t{}\t{}", n.sentence_id, n.word_index, fmt_num(n.ccp), n.n_protocols)?;
    }
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    fmt_num(x.unwrap_or(f64::NAN))
}

pub const RAW_HEADER: &str =
    "sentence_id\tword_index\ttoken\tlength\tfreq_class\tccp\tn_protocols\tp_ngram\tp_topic\tp_rnn";

pub fn write_raw_scores<W: Write>(mut out: W, rows: &[RawScore]) -> Result<()> {
    writeln!(out, "{RAW_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.sentence_id,
            r.word_index,
            r.token,
            r.length,
            r.frequency_class.map_or("NA".into(), |c| c.to_string()),
            opt(r.ccp),
            r.n_protocols.map_or("NA".into(), |n| n.to_string()),
            opt(r.ngram),
            opt(r.topic),
            opt(r.rnn),
        )?;
    }
    Ok(())
}

/// Column order of the predictor table.
pub fn predictor_header() -> Vec<String> {
    let mut h: Vec<String> = ["sentence_id", "word_index", "token", "complete"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for p in Position::ALL {
        h.push(length_column(p));
    }
    for p in Position::ALL {
        h.push(frequency_column(p));
    }
    for s in Source::ALL {
        for p in Position::ALL {
            h.push(score_column(s, p));
        }
    }
    for s in Source::ALL {
        for p in Position::ALL {
            h.push(raw_column(s, p));
        }
    }
    h
}

pub fn write_predictor_rows<W: Write>(mut out: W, rows: &[PredictorRow]) -> Result<()> {
    writeln!(out, "{}", predictor_header().join("\t"))?;
    for r in rows {
        let mut f = vec![
            r.sentence_id.to_string(),
            r.word_index.to_string(),
            r.token.clone(),
            (r.complete as u8).to_string(),
        ];
        f.extend(r.length.iter().map(|&x| fmt_num(x)));
        f.extend(r.frequency.iter().map(|&x| fmt_num(x)));
        for s in Source::ALL {
            f.extend(Position::ALL.iter().map(|&p| fmt_num(r.score(s, p))));
        }
        for s in Source::ALL {
            f.extend(Position::ALL.iter().map(|&p| fmt_num(r.raw(s, p))));
        }
        writeln!(out, "{}", f.join("\t"))?;
    }
    Ok(())
}

pub fn read_predictor_rows(path: &Path) -> Result<Vec<PredictorRow>> {
    let t = Table::open(path)?;
    let header = predictor_header();
    let cols: Vec<usize> = header.iter().map(|h| t.column(h)).collect::<Result<_>>()?;
    (0..t.len())
        .map(|r| {
            let num = |i: usize| t.float(r, cols[i]);
            let mut row = PredictorRow {
                sentence_id: t.get(r, cols[0])?,
                word_index: t.get(r, cols[1])?,
                token: t.str(r, cols[2])?.to_string(),
                complete: t.get::<u8>(r, cols[3])? == 1,
                scores: [[0.0; 3]; 4],
                raw: [[0.0; 3]; 4],
                length: [0.0; 3],
                frequency: [0.0; 3],
            };
            for p in 0..3 {
                row.length[p] = num(4 + p)?;
                row.frequency[p] = num(7 + p)?;
            }
            for s in 0..4 {
                for p in 0..3 {
                    row.scores[s][p] = num(10 + s * 3 + p)?;
                    row.raw[s][p] = num(22 + s * 3 + p)?;
                }
            }
            Ok(row)
        })
        .collect()
}
