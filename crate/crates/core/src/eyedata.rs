//! Fixation events to SFD / GD / TVT and landing position, and the duration
//! and boundary filters.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tsv::{fmt_num, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct FixationEvent {
    pub subject: String,
    pub sentence_id: u32,
    /// 1-based.
    pub word_index: u32,
    /// Temporal order within the trial.
    pub order: u32,
    pub duration: f64,
    /// 1-based letter index within the word.
    pub landing_letter: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordMeasures {
    pub subject: String,
    pub sentence_id: u32,
    pub word_index: u32,
    pub sfd: Option<f64>,
    pub gd: Option<f64>,
    pub tvt: Option<f64>,
    pub landing_position: f64,
    pub first_pass_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    Sfd,
    Gd,
    Tvt,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Sfd, Measure::Gd, Measure::Tvt];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Sfd => "SFD",
            Measure::Gd => "GD",
            Measure::Tvt => "TVT",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SFD" => Ok(Measure::Sfd),
            "GD" => Ok(Measure::Gd),
            "TVT" => Ok(Measure::Tvt),
            _ => Err(Error::InvalidArgument(format!("unknown measure {s:?}"))),
        }
    }

    /// Durations at or above this value are dropped.
    pub fn upper_cutoff(self) -> f64 {
        match self {
            Measure::Sfd => 800.0,
            Measure::Gd => 1200.0,
            Measure::Tvt => 1600.0,
        }
    }

    pub fn value(self, m: &WordMeasures) -> Option<f64> {
        match self {
            Measure::Sfd => m.sfd,
            Measure::Gd => m.gd,
            Measure::Tvt => m.tvt,
        }
    }
}

/// Durations below this value are dropped.
pub const LOWER_CUTOFF: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureOptions {
    /// A first pass exists only if the word is fixated before any word to its
    /// right. When false, the first visit counts as first pass even if it is
    /// a regression.
    pub progressive_first_pass: bool,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            progressive_first_pass: true,
        }
    }
}

fn trial_measures(
    subject: &str,
    sentence_id: u32,
    fix: &[&FixationEvent],
    lengths: &HashMap<(u32, u32), usize>,
    opts: MeasureOptions,
) -> Result<Vec<WordMeasures>> {
    let mut words: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, f) in fix.iter().enumerate() {
        words.entry(f.word_index).or_default().push(i);
    }
    let mut out = Vec::with_capacity(words.len());
    for (&w, idx) in &words {
        let len = *lengths.get(&(sentence_id, w)).ok_or_else(|| {
            Error::InvalidArgument(format!("no word length for sentence {sentence_id}, word {w}"))
        })?;
        let first = idx[0];
        let landing = fix[first].landing_letter;
        if landing < 1 || landing as usize > len {
            return Err(Error::InvalidArgument(format!(
                "subject {subject}, sentence {sentence_id}, word {w}: landing letter {landing} outside 1..={len}"
            )));
        }
        let tvt: f64 = idx.iter().map(|&i| fix[i].duration).sum();
        let progressive = fix[..first].iter().all(|f| f.word_index < w);
        let (gd, count) = if progressive || !opts.progressive_first_pass {
            let run = fix[first..].iter().take_while(|f| f.word_index == w);
            let (mut gd, mut n) = (0.0, 0u32);
            for f in run {
                gd += f.duration;
                n += 1;
            }
            (Some(gd), n)
        } else {
            (None, 0)
        };
        out.push(WordMeasures {
            subject: subject.to_string(),
            sentence_id,
            word_index: w,
            sfd: if count == 1 { gd } else { None },
            gd,
            tvt: Some(tvt),
            landing_position: landing as f64 / len as f64,
            first_pass_count: count,
        });
    }
    Ok(out)
}

/// Per-word measures for every (subject, sentence) trial. Events must be in
/// temporal order within each trial. `lengths` maps (sentence, word) to the
/// word's letter count.
pub fn compute_measures(
    events: &[FixationEvent],
    lengths: &HashMap<(u32, u32), usize>,
    opts: MeasureOptions,
) -> Result<Vec<WordMeasures>> {
    let mut trials: BTreeMap<(&str, u32), Vec<&FixationEvent>> = BTreeMap::new();
    for e in events {
        if !(e.duration > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "subject {}, sentence {}: non-positive duration {}",
                e.subject, e.sentence_id, e.duration
            )));
        }
        let trial = trials.entry((e.subject.as_str(), e.sentence_id)).or_default();
        if let Some(prev) = trial.last() {
            if e.order <= prev.order {
                return Err(Error::UnorderedEvents {
                    subject: e.subject.clone(),
                    sentence: e.sentence_id,
                    order: e.order,
                });
            }
        }
        trial.push(e);
    }
    let mut out = Vec::new();
    for ((subject, sentence), fix) in trials {
        out.extend(trial_measures(subject, sentence, &fix, lengths, opts)?);
    }
    Ok(out)
}

/// Counts reported by [`filter_measures`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterLog {
    pub input: usize,
    pub missing: usize,
    pub boundary: usize,
    pub too_short: usize,
    pub too_long: usize,
    pub kept: usize,
}

impl FilterLog {
    pub fn dropped(&self) -> usize {
        self.input - self.kept
    }
}

/// Keeps rows with LOWER_CUTOFF <= value < upper cutoff, dropping the first
/// and last word of each sentence. `sentence_lengths` gives words per sentence.
pub fn filter_measures(
    rows: &[WordMeasures],
    measure: Measure,
    sentence_lengths: &HashMap<u32, usize>,
) -> (Vec<WordMeasures>, FilterLog) {
    let mut log = FilterLog {
        input: rows.len(),
        ..FilterLog::default()
    };
    let mut kept = Vec::new();
    for r in rows {
        let Some(v) = measure.value(r) else {
            log.missing += 1;
            continue;
        };
        let last = sentence_lengths.get(&r.sentence_id).copied().unwrap_or(0) as u32;
        if r.word_index <= 1 || r.word_index >= last {
            log.boundary += 1;
        } else if v < LOWER_CUTOFF {
            log.too_short += 1;
        } else if v >= measure.upper_cutoff() {
            log.too_long += 1;
        } else {
            kept.push(r.clone());
        }
    }
    log.kept = kept.len();
    (kept, log)
}

pub fn read_fixations(path: &Path) -> Result<Vec<FixationEvent>> {
    let t = Table::open(path)?;
    let c = [
        t.column("subject_id")?,
        t.column("sentence_id")?,
        t.column("word_index")?,
        t.column("order")?,
        t.column("duration_ms")?,
        t.column("landing_letter")?,
    ];
    (0..t.len())
        .map(|r| {
            Ok(FixationEvent {
                subject: t.str(r, c[0])?.to_string(),
                sentence_id: t.get(r, c[1])?,
                word_index: t.get(r, c[2])?,
                order: t.get(r, c[3])?,
                duration: t.get(r, c[4])?,
                landing_letter: t.get(r, c[5])?,
            })
        })
        .collect()
}

pub fn write_fixations<W: Write>(mut out: W, events: &[FixationEvent]) -> Result<()> {
    writeln!(out, "subject_id\tsentence_id\tword_index\torder\tduration_ms\tlanding_letter")?;
    for e in events {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.subject,
            e.sentence_id,
            e.word_index,
            e.order,
            fmt_num(e.duration),
            e.landing_letter
        )?;
    }
    Ok(())
}

pub const MEASURES_HEADER: &str =
    "subject_id\tsentence_id\tword_index\tsfd\tgd\ttvt\tlanding_position\tfirst_pass_count";

pub fn write_measures<W: Write>(mut out: W, rows: &[WordMeasures]) -> Result<()> {
    writeln!(out, "{MEASURES_HEADER}")?;
    let o = |x: Option<f64>| fmt_num(x.unwrap_or(f64::NAN));
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.subject,
            r.sentence_id,
            r.word_index,
            o(r.sfd),
            o(r.gd),
            o(r.tvt),
            fmt_num(r.landing_position),
            r.first_pass_count
        )?;
    }
    Ok(())
}

pub fn read_measures(path: &Path) -> Result<Vec<WordMeasures>> {
    let t = Table::open(path)?;
    let c: Vec<usize> = MEASURES_HEADER
        .split('\t')
        .map(|h| t.column(h))
        .collect::<Result<_>>()?;
    let opt = |r: usize, col: usize| -> Result<Option<f64>> {
        let v = t.float(r, col)?;
        Ok((!v.is_nan()).then_some(v))
    };
    (0..t.len())
        .map(|r| {
            Ok(WordMeasures {
                subject: t.str(r, c[0])?.to_string(),
                sentence_id: t.get(r, c[1])?,
                word_index: t.get(r, c[2])?,
                sfd: opt(r, c[3])?,
                gd: opt(r, c[4])?,
                tvt: opt(r, c[5])?,
                landing_position: t.get(r, c[6])?,
                first_pass_count: t.get(r, c[7])?,
            })
        })
        .collect()
}
