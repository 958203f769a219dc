//! End-to-end steps: training, scoring, eye measures and the analysis
//! report bundle. Each step reads its inputs from an [`AnalysisConfig`].

mod analysis;
mod config;
mod report;

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use readpred_gam::{linspace, partial_effect, term_summaries, EffectPoint, FitOptions, TermSummary};

pub use analysis::{
    build_dataset, correlation_variables, head_to_head_rows, item_level_correlations,
    ladder_rows, pearson, run_head_to_head, run_ladder, AnalysisData, ComparisonRow,
    DesignOptions, FitRecord, FitSet, ItemCorrelation, ModelSpec,
};
pub use config::{default_baseline, parse_source, AnalysisConfig, LANDING, OUT_DIR_ENV};
pub use report::{emit_reports, manifest_counts, sha256_file};

use crate::corpus::{load_training_corpus, SentenceCorpus, Vocabulary};
use crate::error::{IoContext, Result};
use crate::eyedata::{
    compute_measures, filter_measures, read_fixations, read_measures, write_measures, FilterLog,
    Measure, WordMeasures,
};
use crate::ngram::{train_kn, KnModel};
use crate::rnn::{train_rnn, EpochLog, RnnModel};
use crate::scoring::{
    align_predictors, read_norms, read_predictor_rows, read_stimuli, score_stimuli,
    write_predictor_rows, write_raw_scores, Models, PredictorRow, RawScore, StimulusToken,
};
use crate::topics::{train_lda, LdaModel};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_path(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_path(path)?))
}

fn training_corpus(cfg: &AnalysisConfig) -> Result<(Vocabulary, SentenceCorpus)> {
    let path = cfg.require(&cfg.corpus, "corpus")?;
    let (vocab, corpus) = load_training_corpus(path, &cfg.tokenizer, cfg.min_count)?;
    if let Some(out) = &cfg.vocabulary {
        vocab.write_tsv(create(out)?).with_path(out)?;
    }
    Ok((vocab, corpus))
}

pub fn train_ngram_step(cfg: &AnalysisConfig) -> Result<KnModel> {
    let (vocab, corpus) = training_corpus(cfg)?;
    let model = train_kn(&corpus, vocab, cfg.ngram_order, cfg.ngram_discounts.as_deref())?;
    if let Some(out) = &cfg.ngram_model {
        model.save(out)?;
    }
    Ok(model)
}

pub fn train_lda_step(cfg: &AnalysisConfig) -> Result<LdaModel> {
    let (vocab, corpus) = training_corpus(cfg)?;
    let model = train_lda(&corpus, vocab, &cfg.lda)?;
    if let Some(out) = &cfg.lda_model {
        model.save(out)?;
    }
    Ok(model)
}

pub fn train_rnn_step(cfg: &AnalysisConfig) -> Result<(RnnModel, Vec<EpochLog>)> {
    let (vocab, corpus) = training_corpus(cfg)?;
    let (model, log) = train_rnn(&corpus, vocab, &cfg.rnn, None)?;
    if let Some(out) = &cfg.rnn_model {
        model.save(out)?;
    }
    Ok((model, log))
}

fn frequency_vocabulary(cfg: &AnalysisConfig) -> Result<Vocabulary> {
    match &cfg.vocabulary {
        Some(p) if p.exists() => Vocabulary::load_tsv(p),
        _ => Ok(training_corpus(cfg)?.0),
    }
}

fn load_if<T>(path: &Option<PathBuf>, load: fn(&Path) -> Result<T>) -> Result<Option<T>> {
    path.as_deref().filter(|p| p.exists()).map(load).transpose()
}

/// Scores the stimuli with every configured model and writes the raw and
/// aligned predictor tables.
pub fn score_step(cfg: &AnalysisConfig) -> Result<(Vec<RawScore>, Vec<PredictorRow>)> {
    let stimuli = read_stimuli(cfg.require(&cfg.stimuli, "stimuli")?)?;
    let norms = match &cfg.norms {
        Some(p) => read_norms(p)?,
        None => Vec::new(),
    };
    let vocab = frequency_vocabulary(cfg)?;
    let ngram = load_if(&cfg.ngram_model, KnModel::load)?;
    let lda = load_if(&cfg.lda_model, LdaModel::load)?;
    let rnn = load_if(&cfg.rnn_model, RnnModel::load)?;
    let models = Models {
        ngram: ngram.as_ref(),
        topic: lda.as_ref().map(|m| (m, cfg.inference.clone())),
        rnn: rnn.as_ref(),
    };
    let raw = score_stimuli(&stimuli, &models, &norms, &vocab, &cfg.tokenizer)?;
    if let Some(out) = &cfg.raw_scores {
        write_raw_scores(create(out)?, &raw)?;
    }
    let rows = align_predictors(&raw);
    if let Some(out) = &cfg.predictors {
        write_predictor_rows(create(out)?, &rows)?;
    }
    Ok((raw, rows))
}

/// Words per sentence.
pub fn sentence_lengths(stimuli: &[StimulusToken]) -> HashMap<u32, usize> {
    let mut out: HashMap<u32, usize> = HashMap::new();
    for t in stimuli {
        *out.entry(t.sentence_id).or_default() += 1;
    }
    out
}

fn word_lengths(stimuli: &[StimulusToken]) -> HashMap<(u32, u32), usize> {
    stimuli
        .iter()
        .map(|t| ((t.sentence_id, t.word_index), t.token.chars().count()))
        .collect()
}

/// Per-word eye measures from the fixation table.
pub fn measures_step(cfg: &AnalysisConfig) -> Result<Vec<WordMeasures>> {
    let stimuli = read_stimuli(cfg.require(&cfg.stimuli, "stimuli")?)?;
    let events = read_fixations(cfg.require(&cfg.fixations, "fixations")?)?;
    let rows = compute_measures(&events, &word_lengths(&stimuli), cfg.measure_options)?;
    if let Some(out) = &cfg.measures_table {
        write_measures(create(out)?, &rows)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct MeasureReport {
    pub measure: Measure,
    pub filter: FilterLog,
    pub data_rows: usize,
    pub unmatched: usize,
    pub fits: FitSet,
    pub ladder: Vec<ComparisonRow>,
    pub head_to_head: Vec<ComparisonRow>,
    /// Term table of the model with every predictor.
    pub terms: Vec<TermSummary>,
    pub curves: Vec<(String, Vec<EffectPoint>)>,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub seed: u64,
    /// `(label, path)` of every input file, hashed into the manifest.
    pub inputs: Vec<(String, PathBuf)>,
    pub predictor_rows: usize,
    pub complete_rows: usize,
    pub measure_rows: usize,
    pub correlations: Vec<ItemCorrelation>,
    pub measures: Vec<MeasureReport>,
}

impl AnalysisConfig {
    pub fn design(&self) -> DesignOptions {
        DesignOptions {
            baseline: self.baseline.clone(),
            sources: self.sources.clone(),
            basis_k: self.basis_k,
            fit: FitOptions::default(),
        }
    }
}

/// Fits, comparisons and curves for one measure.
pub fn analyze_measure(
    data: &AnalysisData,
    filter: FilterLog,
    design: &DesignOptions,
    curve_points: usize,
) -> MeasureReport {
    let mut fits = FitSet::default();
    let mut specs = design.ladder_specs();
    specs.extend(design.head_to_head_specs());
    specs.push(design.all_spec());
    fits.fit(data, &specs, design);
    let ladder = ladder_rows(&fits, design);
    let head_to_head = head_to_head_rows(&fits, design);
    let mut terms = Vec::new();
    let mut curves = Vec::new();
    if let Some(all) = fits.get("all") {
        terms = term_summaries(all);
        for t in all.terms.iter().filter(|t| t.is_smooth()) {
            let Ok(x) = data.frame.column(&t.name) else { continue };
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if let Ok(points) = partial_effect(all, &t.name, &linspace(lo, hi, curve_points)) {
                curves.push((t.name.clone(), points));
            }
        }
    }
    MeasureReport {
        measure: data.measure,
        filter,
        data_rows: data.response.len(),
        unmatched: data.unmatched,
        fits,
        ladder,
        head_to_head,
        terms,
        curves,
    }
}

/// Runs the full analysis and returns the report without writing it.
pub fn analyze(cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    let stimuli_path = cfg.require(&cfg.stimuli, "stimuli")?;
    let predictors_path = cfg.require(&cfg.predictors, "predictors")?;
    let stimuli = read_stimuli(stimuli_path)?;
    let predictors = read_predictor_rows(predictors_path)?;
    let mut inputs = vec![
        ("stimuli".to_string(), stimuli_path.to_path_buf()),
        ("predictors".to_string(), predictors_path.to_path_buf()),
    ];
    let rows = match &cfg.measures_table {
        Some(p) if p.exists() => {
            inputs.push(("measures_table".into(), p.clone()));
            read_measures(p)?
        }
        _ => {
            let p = cfg.require(&cfg.fixations, "fixations or measures_table")?;
            inputs.push(("fixations".into(), p.to_path_buf()));
            let events = read_fixations(p)?;
            compute_measures(&events, &word_lengths(&stimuli), cfg.measure_options)?
        }
    };
    let lengths = sentence_lengths(&stimuli);
    let design = cfg.design();
    let mut kept_all = Vec::new();
    let mut measures = Vec::new();
    for &m in &cfg.measures {
        let (kept, filter) = filter_measures(&rows, m, &lengths);
        log::info!("{}: kept {} of {} rows", m.name(), filter.kept, filter.input);
        let data = build_dataset(&kept, &predictors, m);
        measures.push(analyze_measure(&data, filter, &design, cfg.curve_points));
        kept_all.push((m, kept));
    }
    Ok(AnalysisReport {
        seed: cfg.seed,
        inputs,
        predictor_rows: predictors.len(),
        complete_rows: predictors.iter().filter(|r| r.complete).count(),
        measure_rows: rows.len(),
        correlations: item_level_correlations(&predictors, &kept_all),
        measures,
    })
}

/// Runs the analysis and writes the report bundle to `cfg.output_dir`.
pub fn analyze_step(cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    let report = analyze(cfg)?;
    emit_reports(&report, &cfg.output_dir)?;
    Ok(report)
}
