mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use readpred::eyedata::{FilterLog, Measure};
use readpred::pipeline::{
    analyze_measure, emit_reports, ladder_rows, pearson, run_head_to_head, run_ladder,
    AnalysisReport, DesignOptions, FitSet,
};
use readpred::scoring::{score_column, Position, Source};

use common::{planted_data, planted_design, rng};

fn deviance_of(fits: &FitSet, name: &str) -> f64 {
    fits.get(name).unwrap().deviance
}

#[test]
fn ladder_rows_are_differences_of_stored_fits() {
    let data = planted_data(&mut rng(3), 400, 0.1);
    let design = planted_design();
    let (fits, rows) = run_ladder(&data, &design);
    assert_eq!(rows.len(), 2 * 3);
    for r in &rows {
        let c = r.result.as_ref().unwrap();
        let expect = deviance_of(&fits, &r.base) - deviance_of(&fits, &r.extended);
        assert_eq!(c.delta_deviance, expect);
        let edf = fits.get(&r.extended).unwrap().edf - fits.get(&r.base).unwrap().edf;
        assert_eq!(c.delta_edf, edf);
    }
    assert_eq!(rows[0].base, "baseline");
    assert_eq!(rows[0].extended, "ngram+present");
    assert!(rows[0].result.as_ref().unwrap().significant(0.05));
}

#[test]
fn constant_predictor_adds_nothing() {
    let mut data = planted_data(&mut rng(4), 300, 0.1);
    for p in Position::ALL {
        data.frame.insert(score_column(Source::Topic, p), vec![-2.0; 300]);
    }
    let (_, rows) = run_ladder(&data, &planted_design());
    for r in rows.iter().filter(|r| r.label == "topic") {
        let c = r.result.as_ref().unwrap();
        assert!(c.delta_deviance.abs() < 1e-8, "{}: {}", r.step, c.delta_deviance);
        assert!(!c.significant(0.05));
    }
}

#[test]
fn identical_sources_tie_head_to_head() {
    let mut data = planted_data(&mut rng(5), 300, 0.1);
    for p in Position::ALL {
        let ccp = data.frame.column(&score_column(Source::Ccp, p)).unwrap().to_vec();
        data.frame.insert(score_column(Source::Rnn, p), ccp);
    }
    let design = DesignOptions {
        sources: vec![Source::Ccp, Source::Rnn],
        ..planted_design()
    };
    let (_, rows) = run_head_to_head(&data, &design);
    assert_eq!(rows.len(), 1);
    let c = rows[0].result.as_ref().unwrap();
    assert_eq!(c.delta_deviance, 0.0);
    assert_eq!(c.delta_edf, 0.0);
}

#[test]
fn generating_source_beats_ccp() {
    let data = planted_data(&mut rng(6), 400, 0.12);
    let design = DesignOptions {
        sources: vec![Source::Ccp, Source::Ngram],
        ..planted_design()
    };
    let (_, rows) = run_head_to_head(&data, &design);
    let c = rows[0].result.as_ref().unwrap();
    assert_eq!(rows[0].label, "ngram");
    assert!(c.delta_deviance > 0.0);
}

#[test]
fn failed_fit_is_marked_and_ladder_continues() {
    let mut data = planted_data(&mut rng(7), 200, 0.1);
    let mut col = data.frame.column("topic_last").unwrap().to_vec();
    col[10] = f64::NAN;
    data.frame.insert("topic_last", col);
    let (fits, rows) = run_ladder(&data, &planted_design());
    assert!(fits.fits["topic+last"].outcome.is_err());
    assert!(fits.fits["ngram+next"].outcome.is_ok());
    let by: HashMap<(String, String), bool> = rows
        .iter()
        .map(|r| ((r.label.clone(), r.step.clone()), r.result.is_ok()))
        .collect();
    assert!(by[&("topic".into(), "present".into())]);
    assert!(!by[&("topic".into(), "last".into())]);
    assert!(!by[&("topic".into(), "next".into())]);
    assert!(by[&("ngram".into(), "next".into())]);
}

fn report_for(design: &DesignOptions, n: usize) -> AnalysisReport {
    let data = planted_data(&mut rng(8), n, 0.1);
    let filter = FilterLog {
        input: n,
        kept: n,
        ..FilterLog::default()
    };
    AnalysisReport {
        seed: 1,
        inputs: Vec::new(),
        predictor_rows: n,
        complete_rows: n,
        measure_rows: n,
        correlations: Vec::new(),
        measures: vec![analyze_measure(&data, filter, design, 5)],
    }
}

#[test]
fn empty_ladder_gives_header_only_files() {
    let design = DesignOptions {
        sources: Vec::new(),
        ..planted_design()
    };
    let report = report_for(&design, 150);
    let tmp = tempfile::tempdir().unwrap();
    emit_reports(&report, tmp.path()).unwrap();
    let ladder = std::fs::read_to_string(tmp.path().join("ladder_GD.tsv")).unwrap();
    assert_eq!(ladder.lines().count(), 1);
    let h2h = std::fs::read_to_string(tmp.path().join("head_to_head_GD.tsv")).unwrap();
    assert_eq!(h2h.lines().count(), 1);
    let manifest = std::fs::read_to_string(tmp.path().join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("tool = readpred\nversion = "));
    assert!(manifest.contains("filter.GD.kept = 150\n"));
    assert!(manifest.lines().all(|l| l.contains(" = ")));
}

#[test]
fn reports_are_deterministic() {
    let design = planted_design();
    let tmp = tempfile::tempdir().unwrap();
    emit_reports(&report_for(&design, 200), &tmp.path().join("a")).unwrap();
    emit_reports(&report_for(&design, 200), &tmp.path().join("b")).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(tmp.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 7);
    for name in names {
        let a = tmp.path().join("a").join(&name);
        if a.is_file() {
            let b = tmp.path().join("b").join(&name);
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{name:?}");
        }
    }
}

#[test]
fn unwritable_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let design = DesignOptions {
        sources: Vec::new(),
        ..planted_design()
    };
    assert!(emit_reports(&report_for(&design, 100), &file.join("out")).is_err());
}

#[test]
fn ladder_rows_cover_every_source_and_combined_row() {
    let design = DesignOptions::default();
    let rows = ladder_rows(&FitSet::default(), &design);
    assert_eq!(rows.len(), 4 * 3 + 1);
    assert!(rows.iter().all(|r| r.result.is_err()));
    let last = rows.last().unwrap();
    assert_eq!((last.base.as_str(), last.extended.as_str()), ("ccp+next", "lm_all"));
    assert_eq!(Measure::ALL.len(), 3);
}

proptest! {
    #[test]
    fn pearson_is_symmetric_bounded_and_affine_invariant(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let Some(r) = pearson(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((pearson(&y, &x).unwrap() - r).abs() < 1e-12);
            let xs: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
            prop_assert!((pearson(&xs, &y).unwrap() - r).abs() < 1e-9);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert!((pearson(&neg, &y).unwrap() + r).abs() < 1e-12);
        }
    }
}
