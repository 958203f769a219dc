//! Item-level correlations, nested model ladders and head-to-head fits.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use readpred_gam::{
    compare_models, fit_gam, FitOptions, Frame, GamFit, ModelComparison, SmoothSpec, TermSpec,
};

use super::config::LANDING;
use crate::eyedata::{Measure, WordMeasures};
use crate::scoring::{
    frequency_column, length_column, predictor_header, raw_column, score_column, Position,
    PredictorRow, Source,
};

/// Event-level rows joined with complete predictor rows.
#[derive(Debug, Clone)]
pub struct AnalysisData {
    pub measure: Measure,
    pub response: Vec<f64>,
    pub frame: Frame,
    /// Filtered measure rows without a complete predictor row.
    pub unmatched: usize,
}

pub fn build_dataset(
    kept: &[WordMeasures],
    predictors: &[PredictorRow],
    measure: Measure,
) -> AnalysisData {
    let by_key: HashMap<(u32, u32), &PredictorRow> = predictors
        .iter()
        .filter(|r| r.complete)
        .map(|r| ((r.sentence_id, r.word_index), r))
        .collect();
    let names: Vec<String> = predictor_header().split_off(4);
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut landing = Vec::new();
    let mut response = Vec::new();
    let mut unmatched = 0;
    for m in kept {
        let (Some(p), Some(v)) = (by_key.get(&(m.sentence_id, m.word_index)), measure.value(m))
        else {
            unmatched += 1;
            continue;
        };
        response.push(v);
        landing.push(m.landing_position);
        for (col, name) in cols.iter_mut().zip(&names) {
            col.push(p.column(name).expect("header column"));
        }
    }
    let mut frame = Frame::new().with(LANDING, landing);
    for (name, col) in names.into_iter().zip(cols) {
        frame.insert(name, col);
    }
    AnalysisData {
        measure,
        response,
        frame,
        unmatched,
    }
}

/// Sample Pearson correlation over pairs where both values are finite.
/// `None` with fewer than three pairs or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    let n = pairs.len() as f64;
    if pairs.len() < 3 {
        return None;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemCorrelation {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub r: Option<f64>,
}

/// Predictors correlated on item level: transformed and raw present-word
/// scores of every source, plus present-word length and frequency class.
pub fn correlation_variables() -> Vec<String> {
    let mut v = Vec::new();
    for s in Source::ALL {
        v.push(score_column(s, Position::Present));
        v.push(raw_column(s, Position::Present));
    }
    v.push(length_column(Position::Present));
    v.push(frequency_column(Position::Present));
    v
}

/// Pearson correlations between every pair of item-level variables: the
/// predictors of complete rows and the per-item means of each measure (over
/// subjects, after filtering). Pairs are listed with `a` before `b` in
/// variable order, predictors first, then measures.
pub fn item_level_correlations(
    predictors: &[PredictorRow],
    kept: &[(Measure, Vec<WordMeasures>)],
) -> Vec<ItemCorrelation> {
    let items: Vec<&PredictorRow> = predictors.iter().filter(|r| r.complete).collect();
    let mut vars: Vec<(String, Vec<f64>)> = correlation_variables()
        .into_iter()
        .map(|name| {
            let x = items
                .iter()
                .map(|it| it.column(&name).unwrap_or(f64::NAN))
                .collect();
            (name, x)
        })
        .collect();
    for (measure, rows) in kept {
        let mut sums: HashMap<(u32, u32), (f64, usize)> = HashMap::new();
        for r in rows {
            if let Some(v) = measure.value(r) {
                let e = sums.entry((r.sentence_id, r.word_index)).or_default();
                e.0 += v;
                e.1 += 1;
            }
        }
        let means = items
            .iter()
            .map(|it| {
                sums.get(&(it.sentence_id, it.word_index))
                    .map_or(f64::NAN, |(s, c)| s / *c as f64)
            })
            .collect();
        vars.push((measure.name().to_string(), means));
    }
    let mut out = Vec::new();
    for i in 0..vars.len() {
        for j in i + 1..vars.len() {
            let (x, y) = (&vars[i].1, &vars[j].1);
            let n = x
                .iter()
                .zip(y)
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .count();
            out.push(ItemCorrelation {
                a: vars[i].0.clone(),
                b: vars[j].0.clone(),
                n,
                r: pearson(x, y),
            });
        }
    }
    out
}

/// A named set of smooth covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DesignOptions {
    pub baseline: Vec<String>,
    pub sources: Vec<Source>,
    pub basis_k: usize,
    pub fit: FitOptions,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            baseline: super::config::default_baseline(),
            sources: Source::ALL.to_vec(),
            basis_k: 10,
            fit: FitOptions::default(),
        }
    }
}

fn columns(s: Source, upto: usize) -> impl Iterator<Item = String> {
    Position::ALL[..upto].iter().map(move |&p| score_column(s, p))
}

fn models(sources: &[Source]) -> Vec<Source> {
    sources
        .iter()
        .copied()
        .filter(|s| *s != Source::Ccp)
        .collect()
}

impl DesignOptions {
    pub fn baseline_spec(&self) -> ModelSpec {
        ModelSpec {
            name: "baseline".into(),
            covariates: self.baseline.clone(),
        }
    }

    /// Baseline plus the first `steps` positions of `s`.
    pub fn step_spec(&self, s: Source, steps: usize) -> ModelSpec {
        if steps == 0 {
            return self.baseline_spec();
        }
        let mut covariates = self.baseline.clone();
        covariates.extend(columns(s, steps));
        ModelSpec {
            name: format!("{}+{}", s.name(), Position::ALL[steps - 1].name()),
            covariates,
        }
    }

    pub fn full_spec(&self, s: Source) -> ModelSpec {
        self.step_spec(s, 3)
    }

    /// Baseline plus all positions of every language model source.
    pub fn lm_all_spec(&self) -> ModelSpec {
        let mut covariates = self.baseline.clone();
        for s in models(&self.sources) {
            covariates.extend(columns(s, 3));
        }
        ModelSpec {
            name: "lm_all".into(),
            covariates,
        }
    }

    /// Baseline plus all positions of every source.
    pub fn all_spec(&self) -> ModelSpec {
        let mut covariates = self.baseline.clone();
        for &s in &self.sources {
            covariates.extend(columns(s, 3));
        }
        ModelSpec {
            name: "all".into(),
            covariates,
        }
    }

    pub fn ladder_specs(&self) -> Vec<ModelSpec> {
        let mut specs = vec![self.baseline_spec()];
        for &s in &self.sources {
            specs.extend((1..=3).map(|k| self.step_spec(s, k)));
        }
        if self.sources.contains(&Source::Ccp) && !models(&self.sources).is_empty() {
            specs.push(self.lm_all_spec());
        }
        specs
    }

    pub fn head_to_head_specs(&self) -> Vec<ModelSpec> {
        if models(&self.sources).is_empty() {
            return Vec::new();
        }
        let mut specs = vec![self.full_spec(Source::Ccp)];
        specs.extend(models(&self.sources).into_iter().map(|s| self.full_spec(s)));
        specs
    }
}

#[derive(Debug, Clone)]
pub struct FitRecord {
    pub spec: ModelSpec,
    pub outcome: Result<GamFit, String>,
}

/// Fits keyed by model name.
#[derive(Debug, Clone, Default)]
pub struct FitSet {
    pub fits: BTreeMap<String, FitRecord>,
}

impl FitSet {
    /// Fits every spec not already present, in parallel.
    pub fn fit(&mut self, data: &AnalysisData, specs: &[ModelSpec], opts: &DesignOptions) {
        let mut todo: Vec<&ModelSpec> = Vec::new();
        for s in specs {
            if !self.fits.contains_key(&s.name) && !todo.iter().any(|t| t.name == s.name) {
                todo.push(s);
            }
        }
        let done: Vec<FitRecord> = todo
            .par_iter()
            .map(|spec| FitRecord {
                spec: (*spec).clone(),
                outcome: fit_spec(data, spec, opts),
            })
            .collect();
        for r in done {
            if let Err(e) = &r.outcome {
                log::warn!("{} fit {} failed: {e}", data.measure.name(), r.spec.name);
            }
            self.fits.insert(r.spec.name.clone(), r);
        }
    }

    pub fn get(&self, name: &str) -> Option<&GamFit> {
        self.fits.get(name).and_then(|r| r.outcome.as_ref().ok())
    }

    pub fn compare(&self, base: &str, extended: &str) -> Result<ModelComparison, String> {
        let fit = |name: &str| -> Result<&GamFit, String> {
            match self.fits.get(name) {
                None => Err(format!("{name} not fitted")),
                Some(r) => r.outcome.as_ref().map_err(|e| format!("{name}: {e}")),
            }
        };
        compare_models(fit(base)?, fit(extended)?).map_err(|e| e.to_string())
    }
}

fn fit_spec(data: &AnalysisData, spec: &ModelSpec, opts: &DesignOptions) -> Result<GamFit, String> {
    let terms: Vec<TermSpec> = spec
        .covariates
        .iter()
        .map(|c| TermSpec::Smooth(SmoothSpec::new(c.clone()).with_k(opts.basis_k)))
        .collect();
    fit_gam(&data.response, &terms, &data.frame, &opts.fit).map_err(|e| e.to_string())
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    /// Source name, or `lm_all` for the combined row.
    pub label: String,
    pub step: String,
    pub base: String,
    pub extended: String,
    pub result: Result<ModelComparison, String>,
}

/// Nested increments baseline -> +present -> +last -> +next per source, then
/// all language models together against the full CCP model.
pub fn ladder_rows(fits: &FitSet, opts: &DesignOptions) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for &s in &opts.sources {
        for k in 1..=3 {
            let base = opts.step_spec(s, k - 1).name;
            let extended = opts.step_spec(s, k).name;
            rows.push(ComparisonRow {
                label: s.name().into(),
                step: Position::ALL[k - 1].name().into(),
                result: fits.compare(&base, &extended),
                base,
                extended,
            });
        }
    }
    if opts.sources.contains(&Source::Ccp) && !models(&opts.sources).is_empty() {
        let base = opts.full_spec(Source::Ccp).name;
        let extended = opts.lm_all_spec().name;
        rows.push(ComparisonRow {
            label: extended.clone(),
            step: "vs_ccp".into(),
            result: fits.compare(&base, &extended),
            base,
            extended,
        });
    }
    rows
}

/// Each language model (all positions) against CCP (all positions), both on
/// the same baseline. Positive deviance differences favour the model.
pub fn head_to_head_rows(fits: &FitSet, opts: &DesignOptions) -> Vec<ComparisonRow> {
    let base = opts.full_spec(Source::Ccp).name;
    models(&opts.sources)
        .into_iter()
        .map(|s| {
            let extended = opts.full_spec(s).name;
            ComparisonRow {
                label: s.name().into(),
                step: "vs_ccp".into(),
                result: fits.compare(&base, &extended),
                base: base.clone(),
                extended,
            }
        })
        .collect()
}

pub fn run_ladder(data: &AnalysisData, opts: &DesignOptions) -> (FitSet, Vec<ComparisonRow>) {
    let mut fits = FitSet::default();
    fits.fit(data, &opts.ladder_specs(), opts);
    let rows = ladder_rows(&fits, opts);
    (fits, rows)
}

pub fn run_head_to_head(data: &AnalysisData, opts: &DesignOptions) -> (FitSet, Vec<ComparisonRow>) {
    let mut fits = FitSet::default();
    fits.fit(data, &opts.head_to_head_specs(), opts);
    let rows = head_to_head_rows(&fits, opts);
    (fits, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_matches_hand_values() {
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        assert_eq!(pearson(&[1.0, f64::NAN, 3.0, 4.0], &[1.0, 2.0, 3.0, 5.0]).is_some(), true);
        assert_eq!(pearson(&[1.0, 2.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn specs_are_nested() {
        let opts = DesignOptions::default();
        let specs = opts.ladder_specs();
        assert_eq!(specs.len(), 1 + 4 * 3 + 1);
        for s in Source::ALL {
            for k in 1..=3 {
                let small = opts.step_spec(s, k - 1).covariates;
                let big = opts.step_spec(s, k).covariates;
                assert_eq!(big.len(), small.len() + 1);
                assert!(small.iter().all(|c| big.contains(c)));
            }
        }
        assert_eq!(opts.lm_all_spec().covariates.len(), 7 + 9);
        assert_eq!(opts.all_spec().covariates.len(), 7 + 12);
        assert_eq!(opts.full_spec(Source::Ccp).name, "ccp+next");
    }
}
