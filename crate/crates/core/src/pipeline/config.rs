//! `key = value` analysis configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated. Relative paths are resolved against the directory of the
//! config file. Unknown keys are an error.

use std::path::{Path, PathBuf};

use crate::corpus::TokenizerRules;
use crate::error::{Error, IoContext, Result};
use crate::eyedata::{Measure, MeasureOptions};
use crate::rnn::RnnConfig;
use crate::scoring::{frequency_column, length_column, Position, Source};
use crate::topics::{InferenceConfig, LdaConfig};

/// Environment variable that overrides `output_dir`.
pub const OUT_DIR_ENV: &str = "READPRED_OUT_DIR";

pub const LANDING: &str = "landing";

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub corpus: Option<PathBuf>,
    pub vocabulary: Option<PathBuf>,
    pub ngram_model: Option<PathBuf>,
    pub lda_model: Option<PathBuf>,
    pub rnn_model: Option<PathBuf>,
    pub stimuli: Option<PathBuf>,
    pub norms: Option<PathBuf>,
    pub fixations: Option<PathBuf>,
    pub measures_table: Option<PathBuf>,
    pub raw_scores: Option<PathBuf>,
    pub predictors: Option<PathBuf>,
    pub output_dir: PathBuf,

    pub measures: Vec<Measure>,
    pub baseline: Vec<String>,
    pub sources: Vec<Source>,
    pub seed: u64,
    pub basis_k: usize,
    pub curve_points: usize,
    pub alpha: f64,

    pub tokenizer: TokenizerRules,
    pub min_count: u64,
    pub ngram_order: usize,
    pub ngram_discounts: Option<Vec<f64>>,
    pub lda: LdaConfig,
    pub inference: InferenceConfig,
    pub rnn: RnnConfig,
    pub measure_options: MeasureOptions,
}

/// Landing site plus length and frequency class of the present, last and
/// next word.
pub fn default_baseline() -> Vec<String> {
    let mut b = vec![LANDING.to_string()];
    b.extend(Position::ALL.iter().map(|&p| length_column(p)));
    b.extend(Position::ALL.iter().map(|&p| frequency_column(p)));
    b
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            vocabulary: None,
            ngram_model: None,
            lda_model: None,
            rnn_model: None,
            stimuli: None,
            norms: None,
            fixations: None,
            measures_table: None,
            raw_scores: None,
            predictors: None,
            output_dir: PathBuf::from("reports"),
            measures: Measure::ALL.to_vec(),
            baseline: default_baseline(),
            sources: Source::ALL.to_vec(),
            seed: 1,
            basis_k: 10,
            curve_points: 100,
            alpha: 0.05,
            tokenizer: TokenizerRules::default(),
            min_count: 1,
            ngram_order: 3,
            ngram_discounts: None,
            lda: LdaConfig::default(),
            inference: InferenceConfig::default(),
            rnn: RnnConfig::default(),
            measure_options: MeasureOptions::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got {v:?}"))),
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn parse_source(s: &str) -> Result<Source> {
    Source::ALL
        .into_iter()
        .find(|x| x.name() == s.trim().to_ascii_lowercase())
        .ok_or_else(|| Error::Config(format!("unknown source {s:?}")))
}

impl AnalysisConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim(), base_dir)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_path(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, dir)
    }

    /// Applies the output directory override from the environment.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    /// Sets one key. Paths are resolved against `base_dir`.
    pub fn set(&mut self, key: &str, value: &str, base_dir: &Path) -> Result<()> {
        let path = || Some(base_dir.join(value));
        match key {
            "corpus" => self.corpus = path(),
            "vocabulary" => self.vocabulary = path(),
            "ngram_model" => self.ngram_model = path(),
            "lda_model" => self.lda_model = path(),
            "rnn_model" => self.rnn_model = path(),
            "stimuli" => self.stimuli = path(),
            "norms" => self.norms = path(),
            "fixations" => self.fixations = path(),
            "measures_table" => self.measures_table = path(),
            "raw_scores" => self.raw_scores = path(),
            "predictors" => self.predictors = path(),
            "output_dir" => self.output_dir = base_dir.join(value),
            "measures" => {
                self.measures = list(value).iter().map(|m| Measure::parse(m)).collect::<Result<_>>()?
            }
            "baseline" => self.baseline = list(value),
            "sources" => self.sources = list(value).iter().map(|s| parse_source(s)).collect::<Result<_>>()?,
            "seed" => {
                let seed = parse_num(key, value)?;
                self.seed = seed;
                self.lda.seed = seed;
                self.inference.seed = seed;
                self.rnn.seed = seed;
            }
            "basis_k" => self.basis_k = parse_num(key, value)?,
            "curve_points" => self.curve_points = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "lowercase" => self.tokenizer.lowercase = parse_bool(key, value)?,
            "strip_punctuation" => self.tokenizer.strip_punctuation = parse_bool(key, value)?,
            "min_count" => self.min_count = parse_num(key, value)?,
            "ngram_order" => self.ngram_order = parse_num(key, value)?,
            "ngram_discounts" => {
                self.ngram_discounts = Some(list(value).iter().map(|d| parse_num(key, d)).collect::<Result<_>>()?)
            }
            "lda_topics" => self.lda.topics = parse_num(key, value)?,
            "lda_alpha" => self.lda.alpha = parse_num(key, value)?,
            "lda_beta" => self.lda.beta = parse_num(key, value)?,
            "lda_sweeps" => self.lda.sweeps = parse_num(key, value)?,
            "fold_in_sweeps" => self.inference.fold_in_sweeps = parse_num(key, value)?,
            "fold_in_samples" => self.inference.samples = parse_num(key, value)?,
            "include_target" => self.inference.include_target = parse_bool(key, value)?,
            "rnn_hidden" => self.rnn.hidden = parse_num(key, value)?,
            "rnn_epochs" => self.rnn.epochs = parse_num(key, value)?,
            "rnn_learning_rate" => self.rnn.learning_rate = parse_num(key, value)?,
            "rnn_bptt" => self.rnn.bptt_depth = parse_num(key, value)?,
            "rnn_temperature" => self.rnn.temperature = parse_num(key, value)?,
            "rnn_classes" => self.rnn.classes = Some(parse_num(key, value)?),
            "progressive_first_pass" => {
                self.measure_options.progressive_first_pass = parse_bool(key, value)?
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        field
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{name} is not configured")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_resolves_paths() {
        let text = "# toy\nstimuli = s.tsv\nmeasures = SFD, gd\nsources = ngram,rnn\nseed = 7\nlda_topics = 12\n\noutput_dir = out\n";
        let cfg = AnalysisConfig::parse(text, Path::new("/data")).unwrap();
        assert_eq!(cfg.stimuli.as_deref(), Some(Path::new("/data/s.tsv")));
        assert_eq!(cfg.measures, vec![Measure::Sfd, Measure::Gd]);
        assert_eq!(cfg.sources, vec![Source::Ngram, Source::Rnn]);
        assert_eq!((cfg.seed, cfg.lda.seed, cfg.rnn.seed), (7, 7, 7));
        assert_eq!(cfg.lda.topics, 12);
        assert_eq!(cfg.output_dir, Path::new("/data/out"));
        assert_eq!(cfg.baseline.len(), 7);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(AnalysisConfig::parse("colour = red", Path::new(".")).is_err());
        assert!(AnalysisConfig::parse("seed", Path::new(".")).is_err());
        assert!(AnalysisConfig::parse("seed = x", Path::new(".")).is_err());
        assert!(AnalysisConfig::parse("sources = ccp, lsa", Path::new(".")).is_err());
    }
}
